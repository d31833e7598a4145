import logging

from celery import shared_task

from .bench import BenchCase, run_case
from .compiler import ClusterConfig

logger = logging.getLogger(__name__)


@shared_task(bind=True)
def run_case_task(self, case_dict, config_dict, *, index=0, envelope=None):
    case = BenchCase.from_dict(case_dict)
    cfg = ClusterConfig(**config_dict)
    logger.info("task_run_case index=%d expr=%s", index, case.expression)
    return run_case(case, cfg, index=index, envelope=envelope).to_dict()
