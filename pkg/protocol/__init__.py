# Switch marking and synchronization exchange
