"""Kernel tests of one- and two-sample hypotheses with distribution-free thresholds."""

__version__ = "0.1.0"

from .changepoint import ScanConfig, ScanResult, scan, scan_threshold  # noqa: E402
from .distributions import (DiscretePMF, TargetDensity, bernoulli, blobs,  # noqa: E402
                            gaussian_target, parse_distribution, standard_gaussian_target)
from .experiments import blobs_bandwidth_sweep, median_heuristic_bandwidth  # noqa: E402
from .exponents import (KSDTest, OneSampleMMD, TwoSampleMMD, dstar,  # noqa: E402
                        estimate_type2_exponent, geometric_mixture, kld)
from .kernels import Kernel, gaussian, imq, laplace, parse_kernel  # noqa: E402
from .ksd import SteinKernelCtx, h_p, ksd2_u, ksd2_v, run_ksd_test, threshold_ksd  # noqa: E402
from .mmd import (TestReport, ThresholdSpec, mmd2_biased_one_sample,  # noqa: E402
                  mmd2_biased_two_sample, mmd2_unbiased_one_sample, mmd2_unbiased_two_sample,
                  parse_threshold, run_one_sample_test, run_one_sample_via_two_sample,
                  run_two_sample_test, threshold_one_sample, threshold_permutation,
                  threshold_two_sample)
