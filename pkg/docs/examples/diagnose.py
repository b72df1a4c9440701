from bkfilter import read_trace, check_delta

trace = read_trace("run/trace.csv")
check = check_delta(trace.delta)

print("mean {:.3g}, SE {:.3g}: {}".format(check.mean, check.se, check.flag))
