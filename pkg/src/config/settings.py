import os
from pathlib import Path
from dotenv import load_dotenv
from pydantic_settings import BaseSettings
from pydantic import Field
from typing_extensions import Annotated

load_dotenv()


class EnvSettings(BaseSettings):

    # Output folder for synthetic sets, landscapes and reports
    output_path: Annotated[
        str, Field(default=os.getenv("OUTPUT_PATH", "runs"))
    ]
    log_level: Annotated[
        str, Field(default=os.getenv("LOG_LEVEL", "INFO"))
    ]

    # Batching
    workers: Annotated[
        int, Field(default=int(os.getenv("ALIGN_WORKERS", "1")))
    ]
    block_size: Annotated[
        int, Field(default=int(os.getenv("ALIGN_BLOCK_SIZE", "16")))
    ]
    progress: Annotated[
        bool, Field(default=os.getenv("ALIGN_PROGRESS", "0") == "1")
    ]

    # Polar sampling of Cartesian images: "direct" or "separable"
    sample_method: Annotated[
        str, Field(default=os.getenv("SAMPLE_METHOD", "direct"))
    ]

    # Numerical checks
    full_rank_tolerance: Annotated[
        float, Field(default=float(os.getenv("FULL_RANK_TOLERANCE", "1e-8")))
    ]
    psd_tolerance: Annotated[
        float, Field(default=float(os.getenv("PSD_TOLERANCE", "1e-10")))
    ]

    @property
    def output_dir(self):
        return Path(self.output_path)

    @property
    def phantom_dir(self):
        return Path(os.path.join(os.path.dirname(__file__), "..", "data_utils", "phantoms")).resolve()
