"""Mixture-model imputation of missing energy-loss data and its effect on
neural-network particle identification.

Subpackage map:

- ``kernels``   numerically stable densities, truncated moments, block algebra
- ``data``      incomplete-dataset container and CSV interchange
- ``em``        EM fitting of normal / skew-normal mixtures, imputation
- ``imputers``  uniform interface over the five missing-data treatments
- ``telescope`` parametric multilayer energy-loss simulator and missingness
- ``network``   feed-forward classifier with quasi-Newton training
- ``evaluate``  efficiency / purity / imputation-error sweep harness
- ``config``    experiment configuration schema
- ``cli``       batch driver (simulate / train / sweep / report / selftest)
"""

__version__ = "0.1.0"
