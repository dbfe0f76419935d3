"""Pydantic schemas for run configurations and result records."""

from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, root_validator, validator

SCHEMA_VERSION = "1.0"

CLASSICAL_KINDS = ("Uniform", "Exchange", "ExcitationSD", "ExcitationSDFlip")
QUANTUM_KINDS = ("Quantum", "Effective", "QuantumAveraged")

# Default tau scan ranges per system class (start, stop, step)
TAU_PROFILES: Dict[str, Tuple[float, float, float]] = {
    "fhm": (0.1, 20.0, 0.2),
    "hchain": (0.1, 60.0, 0.2),
    "h2o": (0.1, 40.0, 0.2),
}


class LatticeSpec(BaseModel):
    """Lattice geometry for the Fermi-Hubbard model."""

    kind: Literal["chain", "grid"] = Field("chain", description="Lattice type")
    dims: List[int] = Field(..., description="Site counts per dimension", min_items=1)
    boundary: Literal["open"] = Field("open", description="Boundary condition")

    @validator("dims")
    def validate_dims(cls, v, values):
        if any(d < 1 for d in v):
            raise ValueError("every dimension needs at least one site")
        kind = values.get("kind", "chain")
        if kind == "chain" and len(v) != 1:
            raise ValueError("a chain takes exactly one dimension")
        if kind == "grid" and len(v) != 2:
            raise ValueError("a grid takes exactly two dimensions")
        return v

    @property
    def n_sites(self) -> int:
        return int(np.prod(self.dims))

    def edges(self) -> List[Tuple[int, int]]:
        """Nearest-neighbour bonds (i < j), site index = x + Lx * y."""
        if self.kind == "chain":
            return [(i, i + 1) for i in range(self.dims[0] - 1)]

        lx, ly = self.dims
        bonds = []
        for y in range(ly):
            for x in range(lx):
                site = x + lx * y
                if x + 1 < lx:
                    bonds.append((site, site + 1))
                if y + 1 < ly:
                    bonds.append((site, site + lx))
        return bonds

    class Config:
        allow_mutation = False


class SectorSpec(BaseModel):
    """Particle-number sector (N_alpha, N_beta)."""

    n_alpha: int = Field(..., ge=0, description="Number of spin-up electrons")
    n_beta: int = Field(..., ge=0, description="Number of spin-down electrons")

    def as_tuple(self) -> Tuple[int, int]:
        return self.n_alpha, self.n_beta


class HubbardSystem(BaseModel):
    """Fermi-Hubbard system block."""

    kind: Literal["hubbard"] = "hubbard"
    lattice: LatticeSpec
    t: float = Field(1.0, description="Hopping amplitude")
    U: float = Field(8.0, description="On-site interaction")
    sector: Optional[SectorSpec] = Field(
        None, description="Particle sector; half filling when omitted"
    )

    @root_validator(skip_on_failure=True)
    def validate_sector(cls, values):
        sector = values.get("sector")
        n_sites = values["lattice"].n_sites
        if sector is not None and max(sector.n_alpha, sector.n_beta) > n_sites:
            raise ValueError(f"sector does not fit on {n_sites} sites")
        return values


class MoleculeSystem(BaseModel):
    """Molecular system block backed by an FCIDUMP file."""

    kind: Literal["molecule"] = "molecule"
    fcidump: Path = Field(..., description="Path to the FCIDUMP file")
    label: Optional[str] = Field(None, description="Geometry label, e.g. R=2.0")
    sector: Optional[SectorSpec] = Field(
        None, description="Particle sector; taken from NELEC/MS2 when omitted"
    )
    tau_profile: Literal["hchain", "h2o"] = "hchain"

    @validator("fcidump")
    def validate_fcidump(cls, v):
        if not Path(v).is_file():
            raise ValueError(f"file not found: {v}")
        return v


class FcidumpEntry(BaseModel):
    """One member of a molecular sweep (bond length or chain size)."""

    path: Path
    label: str = Field(..., description="Sweep label, e.g. the bond length")
    size: Optional[int] = Field(None, description="System size N for scaling fits")

    @validator("path")
    def validate_path(cls, v):
        if not Path(v).is_file():
            raise ValueError(f"file not found: {v}")
        return v


class TauGrid(BaseModel):
    """Deterministic evolution-time grid used by gap scans."""

    start: float = Field(0.1, gt=0)
    stop: float = Field(20.0, gt=0)
    step: float = Field(0.2, gt=0)

    @root_validator(skip_on_failure=True)
    def validate_range(cls, values):
        if values["stop"] < values["start"]:
            raise ValueError("tau grid stop must not precede start")
        return values

    def values(self) -> np.ndarray:
        grid = np.arange(self.start, self.stop + 1e-9, self.step)
        return np.round(grid, 10)


class ProposalSpec(BaseModel):
    """Proposal kernel block."""

    kind: Literal[
        "Uniform",
        "Exchange",
        "ExcitationSD",
        "ExcitationSDFlip",
        "Quantum",
        "Effective",
        "QuantumAveraged",
    ]
    label: Optional[str] = Field(None, description="Name used in output files")
    effective_U: Optional[float] = Field(
        None, description="U_e of the kernel Hamiltonian; target U when omitted"
    )
    hopping_gamma: Optional[float] = Field(
        None, ge=0.0, le=1.0, description="Hopping weight gamma_e of the kernel Hamiltonian"
    )
    gamma_interval: Optional[Tuple[float, float]] = Field(
        None, description="gamma_e interval averaged by QuantumAveraged kernels"
    )
    gamma_points: int = Field(4, ge=1, description="Quadrature points on gamma_interval")
    tau_grid: Optional[TauGrid] = Field(None, description="Scan grid; profile default")
    tau: Optional[float] = Field(None, description="Fixed evolution time for chain runs")
    tau_interval: Optional[Tuple[float, float]] = Field(
        None, description="Chain runs draw tau uniformly from this interval's midpoint grid"
    )

    @validator("gamma_interval")
    def validate_gamma_interval(cls, v):
        if v is not None and not (0.0 <= v[0] <= v[1] <= 1.0):
            raise ValueError("gamma_interval must satisfy 0 <= lo <= hi <= 1")
        return v

    @validator("tau_interval")
    def validate_tau_interval(cls, v):
        if v is not None and v[1] < v[0]:
            raise ValueError("tau_interval must satisfy lo <= hi")
        return v

    @root_validator(skip_on_failure=True)
    def validate_kind_parameters(cls, values):
        kind = values["kind"]
        if kind in CLASSICAL_KINDS:
            for key in ("effective_U", "hopping_gamma", "gamma_interval", "tau", "tau_interval"):
                if values.get(key) is not None:
                    raise ValueError(f"{key} does not apply to the {kind} proposal")
        if kind == "QuantumAveraged" and values.get("hopping_gamma") is not None:
            raise ValueError("QuantumAveraged takes gamma_interval, not hopping_gamma")
        return values

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        if self.kind in CLASSICAL_KINDS:
            return self.kind
        if self.gamma_interval is not None:
            return f"{self.kind}(hopping, random)"
        if self.hopping_gamma is not None:
            return f"{self.kind}(hopping, gamma_e={self.hopping_gamma:g})"
        if self.effective_U is not None:
            return f"{self.kind}(U_e={self.effective_U:g})"
        return self.kind


class ObservableSpec(BaseModel):
    """Product of number operators, e.g. n_{1 alpha} n_{N beta}."""

    name: str = Field(..., min_length=1)
    factors: List[Tuple[int, Literal["alpha", "beta"]]] = Field(
        ..., min_items=1, description="(site, spin) pairs; negative sites count from the end"
    )


class VmcSpec(BaseModel):
    """VMC optimisation block."""

    mode: Literal["sampled", "exact"] = "sampled"
    alpha_density: int = Field(3, ge=1, description="Hidden units per visible unit")
    iterations: int = Field(500, ge=1)
    n_samples: int = Field(1000, ge=1, description="Samples per iteration (N_s)")
    n_chains: int = Field(1, ge=1)
    burn_in_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    warm_start: bool = True
    learning_rate: float = Field(0.01, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_epsilon: float = Field(1e-8, gt=0)
    sr_shift: float = Field(0.01, gt=0)
    init_sigma: float = Field(0.01, ge=0)


class ExperimentSpec(BaseModel):
    """Subcommand-specific parameters."""

    u_values: Optional[List[float]] = Field(None, min_items=1)
    fcidumps: Optional[List[FcidumpEntry]] = Field(None, min_items=1)
    sizes: Optional[List[int]] = Field(None, min_items=1)
    epsilon: float = Field(0.01, gt=0, lt=1)
    c_values: List[float] = Field([0.6, 0.7, 0.8], min_items=1)
    n_samples: int = Field(10000, ge=1, description="N_s per chain")
    sample_sizes: Optional[List[int]] = Field(None, min_items=1)
    n_chains: int = Field(100, ge=1)
    burn_in_fraction: float = Field(0.1, ge=0.0, lt=1.0)
    observables: List[ObservableSpec] = Field(
        default_factory=lambda: [
            ObservableSpec(name="n1a_nNb", factors=[(0, "alpha"), (-1, "beta")])
        ]
    )
    start: Optional[str] = Field(None, description="Bitstring start; dominant state when omitted")
    delta_eps_range: Tuple[float, float] = (-10.0, 10.0)
    delta_eps_width: float = Field(0.5, gt=0)
    max_states: int = Field(5000, ge=1)
    t_sc: float = Field(1.0, gt=0, description="Cost of one classical proposal step")
    t_sq: float = Field(1.0, gt=0, description="Cost of one quantum proposal step")
    write_chains: bool = Field(True, description="Per-step chain tables for the longest sample size")
    vmc: VmcSpec = Field(default_factory=VmcSpec)

    @validator("c_values", each_item=True)
    def validate_c(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError("threshold fractions must lie in (0, 1]")
        return v

    @validator("sizes", each_item=True)
    def validate_size(cls, v):
        if v < 1:
            raise ValueError("sizes must be positive")
        return v


class RunConfig(BaseModel):
    """Complete run configuration."""

    system: Union[HubbardSystem, MoleculeSystem] = Field(..., discriminator="kind")
    proposals: List[ProposalSpec] = Field(..., min_items=1)
    experiment: ExperimentSpec = Field(default_factory=ExperimentSpec)
    output_dir: Optional[str] = None
    seed: int = Field(..., ge=0, description="Master seed for every random stream")

    @validator("proposals")
    def validate_unique_names(cls, v):
        names = [p.name for p in v]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ValueError(f"proposal names must be unique; add a label to {duplicates}")
        return v


class ScalingFit(BaseModel):
    """Least-squares fit of delta(N) = a * 2^(-k N)."""

    a: float = Field(..., gt=0)
    k: float
    residual: float = Field(..., ge=0, description="RMS error in the log2 domain")
    points: List[Tuple[float, float]]


class RecordHeader(BaseModel):
    """Provenance carried by every JSON record."""

    schema_version: str = SCHEMA_VERSION
    config_hash: str
    seed: int


class FitRecord(RecordHeader):
    """Scaling fit of one proposal."""

    proposal: str
    fit: ScalingFit
    k_rel: Optional[float] = Field(None, description="k_ExcitationSD / k")
    runtime_ratio: Optional[List[Tuple[float, float]]] = Field(
        None, description="(N, ExcitationSD runtime / this runtime) at each fitted size"
    )


class AutocorrSummary(BaseModel):
    """Integrated autocorrelation summary of one series."""

    tau_int: float
    window: int
    n_samples: int
    n_eff: float
    low_confidence: bool = False


class AutocorrRecord(RecordHeader):
    """Autocorrelation summaries of one proposal and observable."""

    proposal: str
    observable: str
    chains: List[AutocorrSummary]


class ArrayRecord(BaseModel):
    """Shape-tagged array for checkpoints."""

    shape: List[int]
    data: List[float]

    @classmethod
    def from_array(cls, array: np.ndarray) -> "ArrayRecord":
        array = np.asarray(array, dtype=float)
        return cls(shape=list(array.shape), data=array.ravel().tolist())

    def to_array(self) -> np.ndarray:
        return np.asarray(self.data, dtype=float).reshape(self.shape)


class VmcCheckpoint(RecordHeader):
    """Final RBM parameters of a VMC run."""

    n_visible: int
    n_hidden: int
    arrays: Dict[str, ArrayRecord]
