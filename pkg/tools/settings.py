import os

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

load_dotenv()


class Settings(BaseModel):
    """CLI defaults read from the environment (or a local .env file)."""

    output_dir: str = "out"
    jobs: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    failure_log: str = ".tmp/trial_failures.json"

    model_config = ConfigDict(frozen=True)


def get_settings() -> Settings:
    return Settings(
        output_dir=os.getenv("RECOVERY_OUTPUT_DIR", "out"),
        jobs=int(os.getenv("RECOVERY_JOBS", "1")),
        log_level=os.getenv("RECOVERY_LOG_LEVEL", "INFO").upper(),
        failure_log=os.getenv("RECOVERY_FAILURE_LOG", ".tmp/trial_failures.json"),
    )
