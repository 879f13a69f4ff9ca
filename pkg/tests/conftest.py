import pytest

from hintpipe.agents import scaffold_for
from hintpipe.envs import generate_tasks
from hintpipe.hints import build_bank
from hintpipe.llm.rules import offline_backend
from hintpipe.retrieval import Scorer
from hintpipe.rollout import PolicyConfig, failure_records, run_split

PILOT_SEED = 42
PILOT_COUNT = 60


@pytest.fixture(scope="session")
def pilot_tasks():
    return generate_tasks("house", "train", PILOT_COUNT, PILOT_SEED)


@pytest.fixture(scope="session")
def pilot_base(pilot_tasks):
    policy = PolicyConfig(
        mode="base", scaffold=scaffold_for("react", "house"), backend=offline_backend()
    )
    return run_split(pilot_tasks, policy)


@pytest.fixture(scope="session")
def pilot_bank(pilot_base):
    return build_bank(failure_records(pilot_base), offline_backend(), "house")


@pytest.fixture(scope="session")
def pilot_rag(pilot_tasks, pilot_bank):
    policy = PolicyConfig(
        mode="rag",
        scaffold=scaffold_for("react", "house"),
        backend=offline_backend(),
        k=3,
        scorer=Scorer(kind="lexical"),
    )
    return run_split(pilot_tasks, policy, bank=pilot_bank)


@pytest.fixture(scope="session")
def shop_base():
    tasks = generate_tasks("shop", "train", 20, PILOT_SEED)
    policy = PolicyConfig(
        mode="base", scaffold=scaffold_for("react", "shop"), backend=offline_backend()
    )
    return run_split(tasks, policy)


@pytest.fixture(scope="session")
def shop_bank(shop_base):
    return build_bank(failure_records(shop_base), offline_backend(), "shop")


@pytest.fixture(scope="session")
def shop_rag(shop_bank):
    tasks = generate_tasks("shop", "train", 20, PILOT_SEED)
    policy = PolicyConfig(
        mode="rag",
        scaffold=scaffold_for("react", "shop"),
        backend=offline_backend(),
        k=3,
        scorer=Scorer(kind="lexical"),
    )
    return run_split(tasks, policy, bank=shop_bank)
