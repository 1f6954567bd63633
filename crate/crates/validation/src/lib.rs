//! Holds the `acceptance` test target, kept apart from the library so that
//! it runs after the faster suites.
