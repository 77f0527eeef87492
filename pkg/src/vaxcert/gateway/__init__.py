"""HTTP gateway, command line, and measurement harness over the core modules."""
