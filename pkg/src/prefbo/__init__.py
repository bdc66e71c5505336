"""Preferential Bayesian optimization from q-wise choice feedback.

Learn a latent utility from "which of these q options do you prefer?"
responses and pick the next question by maximizing the expected utility
of the best option shown.
"""

from .acquisition import (
    AcquisitionSpec,
    BaseSampleSet,
    eubo_closed_form_q2,
    incumbent_value,
    optimize_acquisition,
    qei_value,
    qeubo_value,
    random_query,
    thompson_query,
)
from .bench import BenchConfig, RegretTrace, aggregate, recommend, run_benchmark, run_replication
from .core import (
    BoxDomain,
    FiniteDomain,
    PreferenceDataset,
    Query,
    Response,
    append_observation,
    rng_stream,
    validate_query,
)
from .exact import (
    ConstantCorrectLikelihood,
    FiniteHypothesisState,
    SoftmaxLikelihood,
    exact_qei,
    exact_qeubo,
    exact_u,
    exact_update,
    exact_v,
    lambert_w,
    run_theorem4_instance,
    verify_lemma_a1,
    verify_theorem1,
    verify_theorem2,
)
from .model import (
    GaussianPosterior,
    HyperFitConfig,
    Hyperparameters,
    PosteriorModel,
    choice_likelihood,
    fit_hyperparameters,
    fit_laplace,
    posterior_at,
    rbf_kernel,
)
from .simulation import (
    SimulatedDM,
    TestProblem,
    calibrate_noise,
    eval_problem,
    get_problem,
    initial_design,
    simulate_response,
)

__version__ = "0.1.0"
