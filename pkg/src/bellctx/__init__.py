"""Per-context classical probability spaces, CHSH Monte Carlo, and
frame-function checks for finite-dimensional quantum models."""

from .chsh import ChshCombination, DEFAULT_COMBINATION, all_combinations, chsh_value
from .gleason import (
    AdditivityReport,
    ExtravalenceReport,
    FrameFunction,
    TraceFormFit,
    check_orthogonal_additivity,
    dim2_counterexample,
    extravalence_check,
    fit_trace_form,
    haar_unitary,
    intertwined_contexts,
    random_context,
    random_density,
)
from .harness import (
    CountsTable,
    EstimateReport,
    ExperimentResult,
    TrialRecord,
    chsh_estimate,
    estimate_correlations,
    estimate_report,
    exact_estimates,
    global_normalized_chsh,
    no_signalling_audit,
    read_event_log,
    run_experiment,
)
from .kolmogorov import (
    ClassicalProbabilitySpace,
    KolmogorovReport,
    SettingsSpec,
    build_mixed_context_space,
    build_mixed_context_space_from_tables,
    build_single_context_space,
    optimal_settings,
    per_context_chsh,
    szabo_chsh,
    verify_kolmogorov,
)
from .models import (
    DeterministicStrategy,
    MixedLhvModel,
    OutcomeModel,
    PrBoxModel,
    QuantumModel,
    SignallingModel,
    SignallingTablesError,
    SuperdeterministicModel,
    enumerate_deterministic_strategies,
    exact_joint_table,
    lhv_max_chsh,
    local_polytope_membership,
    model_from_json,
    model_to_json,
    nearest_lhv_mixture,
    sample_trial,
    superdeterministic_s4_example,
)
from .quantum import (
    Context,
    DensityOperator,
    DichotomicObservable,
    Projector,
    born_probability,
    context_distribution,
    correlation,
    joint_outcome_distribution,
    maximally_mixed,
    photon_pair_state,
    polarization_observable,
    pure_state,
    tensor,
)

__version__ = "0.1.0"
