"""sitr-sim — sensor-invariant tactile representations from simulated optical sensors."""
