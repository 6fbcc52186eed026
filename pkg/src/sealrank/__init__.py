"""Tournament-based re-ranking of candidate systems on saturated benchmarks."""

from .backends import JudgeBackend, JudgeReply, JudgeRequest, LiveBackend
from .baselines import ProtocolRun, run_flat_bracket, run_full_pair, run_listwise, run_original, run_pointwise
from .evolution import EvolutionPolicy
from .fixtures import BenchmarkFixture, Task, load_fixture, make_sim_fixture, validate_fixture
from .ledger import CallEvent, Ledger, PricingConfig, estimate_cost, ledger_summary, theoretical_calls
from .metrics import (
    Leaderboard,
    borda_aggregate,
    rerun_stability,
    resolution_gain,
    spearman_rho,
    subsample_stability,
    top1_agreement,
)
from .prompts import render_prompt
from .report import emit_reports
from .rubric import Rubric, load_rubric, validate_rubric
from .runner import RunConfig, run_benchmark, run_protocols
from .session import JudgeSession, RunLog
from .sim import LatentWorld, SimBackend, generate_world, true_ranking
from .tournament import TaskRanking, run_task_tournament
from .verdict import decide_verdict, match_margin

__version__ = "0.1.0"
