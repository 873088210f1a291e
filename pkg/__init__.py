"""makes the repository a package so the tests can import `main`"""
