"""Learning communication-free multi-agent coordination backed by shared
quantum entanglement: differentiable measurement parameterization, Born-rule
policy evaluation, nonlocal-game training, Bell-polytope certification, and a
constrained multi-agent PPO trainer for a two-router queueing task.
"""

from .cmatrix import (
    HermEig,
    IllConditionedError,
    SaturationError,
    eig_hermitian,
    expm_hermitian,
    hermitian_part,
    inv_sqrt_psd,
    kron,
    logm_pd,
    trace_inner,
)
from .quantum import (
    DensityFactor,
    DensityMatrix,
    Povm,
    PovmLogits,
    bell_state,
    born_joint,
    conditioning_penalty,
    density_from_factor,
    quantum_softmax,
    quantum_softmax_vjp,
)
from .policies import (
    CoordinatorAdvicePolicy,
    EntangledPolicy,
    ExplicitPolicy,
    FiniteHistorySpace,
    SharedAdviceSource,
    SharedRandomnessPolicy,
    check_non_signaling,
    collapse_advice,
    embed_shared_randomness,
    factorized,
    joint_distribution,
    sample_action,
)
from .games import (
    GraphSpec,
    NonlocalGame,
    chsh_quantum_policy,
    classical_optimum,
    cube_graph,
    exact_win_probability,
    load_graph,
    make_chsh,
    make_game,
    make_ghz,
    make_rendezvous,
    play_round,
    tetra_graph,
)
from .bell_lp import (
    BellCertificate,
    PolicyTable,
    enumerate_vertices,
    membership,
    tabulate_policy,
    verify_certificate,
)
from .reinforce import (
    CLASSICAL_OPTIMA,
    QUANTUM_BOUNDS,
    GameTrainConfig,
    TrainRecord,
    quantum_advantage_pct,
    train,
)
from .queueing import QueueParams, QueueState, QueueTrajectory, evaluate, reset, rollout, step
from .mappo import LagrangeState, MappoConfig, gae_advantages, pid_update, train_queueing
from .optim import AdamState, adam_step

__version__ = "0.1.0"
