# Queuing network simulator
