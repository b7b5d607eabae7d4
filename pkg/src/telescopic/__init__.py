"""Telescopic clustering: dependent random partitions across data views.

Bayesian clustering in which every layer (view or time point) of a dataset
carries its own partition of the same subjects, with the partitions coupled
along a dependence polytree.  The package provides exact partition-law
evaluation and dependence measures, truncated blocked Gibbs samplers for the
hierarchical-DP and random-component-count variants, posterior point
estimation, simulation scenarios, and a batch CLI.
"""

__version__ = "0.1.0"

from .partitions import (
    Partition,
    CrossTab,
    canonicalize,
    crosstab,
    rand_index,
    binder_count,
    variation_of_information,
    tari,
    common_refinement,
    enumerate_partitions,
)
from .eppf import (
    StirlingTable,
    stirling_signless,
    log_rising_factorial,
    HdpParams,
    MfmParams,
    CountPrior,
    DependenceReport,
    hdp_log_eppf,
    hdp_log_cond_eppf,
    thdp_log_teppf,
    tau_thdp,
    er_thdp,
    mfm_log_V,
    mfm_log_eppf,
    ua_log_cond_eppf,
    ua_log_teppf,
    tau_ua,
    er_ua,
    er_independent,
    dependence_from_teppf,
    dependence_thdp,
    dependence_ua,
)
from .kernels import NixParams, ClusterStats, posterior_params, sample_atom, log_likelihood, log_marginal
from .layers import Polytree, LayerStack
from .config import ModelSpec, McmcSettings, ConfigError
from .samplers import Trace, fit_thdp, fit_ua, run_chains, split_rhat
from .point_estimation import (
    similarity,
    min_vi,
    min_binder,
    posterior_dependence,
    pairwise_rand_means,
    misallocation_count,
)
from .simgen import ScenarioOutput, scenario1, scenario2, toy_example, true_rand_matrix
