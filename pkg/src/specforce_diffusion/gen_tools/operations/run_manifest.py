"""
Run manifests: effective configuration plus content digests of inputs and outputs.
"""

import json
import logging
import uuid
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Union

from ..storage.container import file_digest

MANIFEST_NAME = "run_manifest.json"


class RunManifest:
    """Collects what one command read and wrote; written by a lifecycle cleanup callback."""

    def __init__(self, command: str, effective_config: Dict[str, Dict[str, str]], out_dir: Union[str, Path],
                 run_id: Optional[str] = None):
        self.logger = logging.getLogger(__name__)
        self.command = command
        self.run_id = run_id or str(uuid.uuid4())
        self.effective_config = effective_config
        self.out_dir = Path(out_dir)
        self.inputs: Dict[str, str] = {}
        self.outputs: Dict[str, str] = {}
        self.summary: Dict[str, Any] = {}
        self.status = "running"
        self.error: Optional[Dict[str, Any]] = None
        self.started_at = datetime.now().isoformat()

    def add_input(self, path: Union[str, Path]) -> None:
        path = Path(path)
        if path.is_file():
            self.inputs[str(path)] = file_digest(path)

    def add_output(self, path: Union[str, Path], digest: Optional[str] = None) -> None:
        path = Path(path)
        self.outputs[str(path)] = digest or file_digest(path)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "run_id": self.run_id,
            "status": self.status,
            "started_at": self.started_at,
            "finished_at": datetime.now().isoformat(),
            "config": self.effective_config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "summary": self.summary,
            "error": self.error,
        }

    def write(self) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / MANIFEST_NAME
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2, ensure_ascii=False, default=str)
        self.logger.info(f"[Run ID: {self.run_id}] Run manifest written to {path}")
        return path
