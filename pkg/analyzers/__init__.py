# Delay law, propagation, condition and tuning analyzers
