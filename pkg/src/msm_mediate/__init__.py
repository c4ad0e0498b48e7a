"""Stochastic direct/indirect effects of a time-to-event mediator under
semi-competing risks, estimated through an illness-death multistate model."""

from .cox import (
    CoxError,
    CoxFit,
    MonotoneLikelihoodError,
    NonConvergenceError,
    SingularInformationError,
    StepFunction,
    breslow_baseline,
    cumulative_hazard,
    cumulative_hazard_between,
    fit_partial_likelihood,
)
from .dataset import (
    CategoricalCoding,
    CovariateSpec,
    CsvFormatError,
    DatasetValidationError,
    SubjectRecord,
    TransitionRow,
    ValidatedDataset,
    design_matrix,
    expand_transitions,
    read_subject_csv,
    records_from_rows,
    transition_tables,
    validate,
    write_subject_csv,
)
from .effects import (
    CovariateProfile,
    DivisionByNullEffect,
    EffectCurve,
    ExtrapolationWarning,
    InterventionPolicy,
    MultistateFit,
    PositivityWarning,
    default_profile,
    effect_contrasts,
    effect_curve,
    fit_multistate,
    marginal_effect_curve,
    prob_alive_treated,
    prob_alive_untreated,
    profiles_from_dataset,
    proportion_eliminated,
    rmst_total_effect,
    state_probabilities,
    stochastic_direct_effect,
    stochastic_indirect_effect,
    survival,
    total_effect,
)
from .simgen import (
    ConfounderSpec,
    ParametricHazards,
    Scenario,
    ScenarioError,
    TransitionModel,
    TruthTable,
    UnreachableTargetError,
    builtin_scenario,
    calibrate_semicompeting,
    dump_scenario,
    fitting_spec,
    generate,
    list_builtin_scenarios,
    load_scenario,
    parse_scenario,
    save_scenario,
    semicompeting_fraction_mc,
    state_occupancy_mc,
    true_effects,
)
from .study import (
    BootstrapError,
    BootstrapResult,
    McSummary,
    Method,
    NoTreatedSubjectsError,
    ReplicateResult,
    bootstrap_ci,
    estimate,
    run_experiment,
    run_replicate,
    scenario_profile,
    summarize,
)

__version__ = "0.1.0"
