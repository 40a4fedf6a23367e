import os
from dotenv import load_dotenv

load_dotenv()

class Settings:
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
    LOG_FILE = os.getenv("LOG_FILE", "")

    # worker pools (sweeps, multistart branches, verification ladders)
    THREADS = max(1, int(os.getenv("GROUNDSTATE_THREADS", "1")))

    # 4D memory guard, 33^4 nodes by default
    MAX_NODES_4D = int(os.getenv("GROUNDSTATE_MAX_NODES_4D", str(33 ** 4)))

    OUTPUT_DIR = os.getenv("GROUNDSTATE_OUTPUT_DIR", "runs")
    DEFAULT_SEED = int(os.getenv("GROUNDSTATE_SEED", "20240611"))

    RESIDUAL_TOL = float(os.getenv("GROUNDSTATE_RESIDUAL_TOL", "1e-8"))
    MAX_ITERS = int(os.getenv("GROUNDSTATE_MAX_ITERS", "4000"))
    MULTISTART = int(os.getenv("GROUNDSTATE_MULTISTART", "4"))

    # |beta| below this counts as "small" coupling for method selection
    WEAK_COUPLING = float(os.getenv("GROUNDSTATE_WEAK_COUPLING", "1.0"))

    DEFAULT_NODES = {1: 257, 2: 129, 3: 49, 4: 17}

settings = Settings()
