"""Small helpers shared by the benchmark and the entry points"""

import hashlib
import json

from pydantic import BaseModel


def config_hash(config: BaseModel) -> str:
    """Stable short hash of a configuration.

    Args:
        config: Any pydantic model; output paths are left out so the same run written to
            different files hashes the same

    Returns:
        12 lowercase hex characters
    """
    data = config.model_dump(mode="json", exclude={"out_csv", "trace"})
    digest = hashlib.sha256(json.dumps(data, sort_keys=True).encode()).hexdigest()
    return digest[:12]
