"""iotuner: storage parameter auto-tuning with a small embeddable ML engine.

The package pairs a dependency-light learning core (dense chain networks,
decision trees, streaming Z-score normalization, a lock-free SPSC ring
buffer, portable model files) with a trace-driven harness that closes the
loop on two storage knobs: block-device readahead (per disk or per file)
and the NFS read-size mount parameter, both against a simulated page cache.
"""

__version__ = "0.1.0"
