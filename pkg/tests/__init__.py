# Test package for the test-time normalization simulator
