"""the test suite: unit tests per module, oracle checks and command line runs"""
