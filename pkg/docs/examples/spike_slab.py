from bkfilter import load_dataset, fit_joint_model, run_chain_linear, select_from_trace
from bkfilter import ChainConfig, SpikeSlabPrior

data = load_dataset("wide.csv", response="y")
model, moments = fit_joint_model(data.x)
data = data.with_design(moments.transform(data.x))

prior = SpikeSlabPrior(xi=0.1, tau2=1.0)
trace = run_chain_linear(data, model, prior, ChainConfig(seed=7))

result = select_from_trace(trace, "abs-diff", alpha=0.1)
print(result.to_frame(data.feature_names).head(10))
