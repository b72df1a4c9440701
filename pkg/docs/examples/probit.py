from bkfilter import load_dataset, fit_joint_model, run_chain_probit, select_from_trace, ChainConfig

data = load_dataset("binary.csv", response="outcome", kind="probit")
model, moments = fit_joint_model(data.x)
data = data.with_design(moments.transform(data.x))

trace = run_chain_probit(data, model, ChainConfig(burn_in=1000, samples=10000))
result = select_from_trace(trace, alpha=0.1)
print([data.feature_names[j] for j in result.selected])
