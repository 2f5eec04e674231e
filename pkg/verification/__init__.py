from verification.suites import SUITES, SuiteResult, VerifyOptions, VerifyReport, parse_suites, run_suites
