# CMC sync analyzer
