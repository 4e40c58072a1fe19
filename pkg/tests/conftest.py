from hypothesis import settings

# deterministic hypothesis runs: the suite doubles as an acceptance gate,
# so example generation must not drift between invocations
settings.register_profile("vextrace", derandomize=True, deadline=None)
settings.load_profile("vextrace")
