"""
On-disk schemas: covariance sets, dataset manifests and checkpoint manifests.
"""

from typing import List

from pydantic import BaseModel, ConfigDict, Field, model_validator


class DomainCovariance(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n: float = Field(..., gt=0, description="Weight n_k, usually the sample count minus one")
    S: List[List[float]]


class CovarianceSetFile(BaseModel):
    """``{"d": int, "domains": [{"n": float, "S": [[...]]}, ...]}``"""
    model_config = ConfigDict(extra="forbid")

    d: int = Field(..., ge=1)
    domains: List[DomainCovariance] = Field(..., min_length=1)

    @model_validator(mode="after")
    def check_shapes(self):
        for k, dom in enumerate(self.domains):
            if len(dom.S) != self.d or any(len(row) != self.d for row in dom.S):
                raise ValueError(f"domain {k}: S must be {self.d} x {self.d}")
        return self


class DatasetManifest(BaseModel):
    """Per-domain CSV paths plus the held-out domain index"""
    model_config = ConfigDict(extra="forbid")

    domains: List[str] = Field(..., min_length=2)
    heldout: int = Field(..., ge=0)
    p: int = Field(..., ge=1)
    C: int = Field(..., ge=2)
    header: bool = Field(True, description="Domain CSVs start with a column-name row")

    @model_validator(mode="after")
    def check_heldout(self):
        if self.heldout >= len(self.domains):
            raise ValueError("heldout must index one of the listed domains")
        return self


class CheckpointEntry(BaseModel):
    name: str
    shape: List[int] = Field(..., min_length=2, max_length=2)
    offset: int = Field(..., ge=0)


class CheckpointManifest(BaseModel):
    """Layout of ``params.bin``: float64 little-endian, entries in order"""

    dtype: str = "float64"
    entries: List[CheckpointEntry]
