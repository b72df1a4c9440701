from bkfilter import ExperimentSpec, run_experiment

spec = ExperimentSpec(n=500, p=30, a=2.0, sigma2=4.0, replications=20, seed=1)
result = run_experiment(spec, jobs=4, progress=True)

print(result.aggregate())
