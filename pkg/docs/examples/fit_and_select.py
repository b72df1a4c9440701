from bkfilter import load_dataset, fit_joint_model, run_chain_linear, select_from_trace, ChainConfig

data = load_dataset("data.csv", response="y")

# second-order knockoffs fit to the standardized features
model, moments = fit_joint_model(data.x)
data = data.with_design(moments.transform(data.x))

trace = run_chain_linear(data, model, config=ChainConfig(burn_in=500, samples=2000, seed=1))
result = select_from_trace(trace, alpha=0.1)

for j in result.selected:
    print(data.feature_names[j], result.p_hat[j])
print("BFDR", result.bfdr)
