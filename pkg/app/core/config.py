import os
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

load_dotenv()

class Settings(BaseSettings):
    # Logging
    log_level: str = os.getenv("PRF_LOG_LEVEL", "INFO")

    # Reward defaults used by the service and the image tools
    default_cell_fraction: float = float(os.getenv("PRF_DEFAULT_CELL_FRACTION", "0.1"))
    default_num_bins: int = int(os.getenv("PRF_DEFAULT_NUM_BINS", "9"))
    default_norm_eps: float = float(os.getenv("PRF_DEFAULT_NORM_EPS", "0.0"))
    silhouette_threshold: float = float(os.getenv("PRF_SILHOUETTE_THRESHOLD", "0.1"))

    # Uploads
    max_upload_bytes: int = int(os.getenv("PRF_MAX_UPLOAD_BYTES", str(5 * 1024 * 1024)))  # 5 MB

    class Config:
        env_file = ".env"
        env_prefix = "PRF_"
        extra = "ignore"

settings = Settings()
