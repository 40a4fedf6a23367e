import logging

from config import settings
from utils import logger as logmod
from utils.logger import get_logger


def test_every_module_logger_writes_to_the_run_log(tmp_path, monkeypatch):
    path = tmp_path / "run.log"
    monkeypatch.setattr(settings, "LOG_FILE", str(path))
    solver = get_logger("file-routing-solver", "INFO")
    sweep = get_logger("file-routing-sweep", "INFO")
    try:
        solver.info("branch converged")
        sweep.warning("tuple failed")
        files = [h for h in solver.handlers if isinstance(h, logging.FileHandler)]
        assert len(files) == 1
        assert files[0] in sweep.handlers
        files[0].flush()
        text = path.read_text()
        assert "INFO groundstate.file-routing-solver: branch converged" in text
        assert "WARNING groundstate.file-routing-sweep: tuple failed" in text
    finally:
        for lg in (solver, sweep):
            for h in list(lg.handlers):
                lg.removeHandler(h)
        logmod._file_handlers.pop(str(path)).close()


def test_no_file_handler_without_a_log_file(monkeypatch):
    monkeypatch.setattr(settings, "LOG_FILE", "")
    lg = get_logger("file-routing-stderr", "INFO")
    assert not any(isinstance(h, logging.FileHandler) for h in lg.handlers)
