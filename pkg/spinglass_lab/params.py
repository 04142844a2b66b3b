# spinglass_lab/params.py

from typing import Any, Dict, Literal, Optional, Type
import hashlib
import json

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .core import CovarianceSeries, OrderParameter
from .exceptions import InvalidInput
from .laws import get_increment_law, get_psi_function
from .utils import UINT64_MAX, default_threads

SCHEMA_VERSION = 1


def parse_order_parameter(text: str) -> OrderParameter:
    """
    Parse "x_1,...,x_k:q_1,...,q_k".

    "1.0:0.0" is the annealed order parameter; "0.3,0.7:0.2,0.6" a two-level one.
    """
    x_part, sep, q_part = text.partition(":")
    if not sep:
        raise InvalidInput(f"order parameter must look like 'x1,x2:q1,q2', got '{text}'")
    try:
        x = [float(v) for v in x_part.split(",") if v.strip()]
        q = [float(v) for v in q_part.split(",") if v.strip()]
    except ValueError:
        raise InvalidInput(f"order parameter levels must be numbers, got '{text}'")
    return OrderParameter(tuple(x), tuple(q))


def parse_covariance(text: str) -> CovarianceSeries:
    """Parse "2:1" or "2:0.5,4:0.5" (power:coefficient pairs)."""
    try:
        pairs = {}
        for item in text.split(","):
            power, _, coeff = item.partition(":")
            pairs[int(power)] = float(coeff)
    except ValueError:
        raise InvalidInput(f"covariance must look like '2:0.5,4:0.5', got '{text}'")
    return CovarianceSeries.from_weights(pairs)


def _checked(parser, value: str) -> str:
    try:
        parser(value)
    except InvalidInput as e:
        raise ValueError(e.detail)
    return value


class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GroundStateParams(_Params):
    algo: Literal["greedy", "spectral"] = Field("greedy", description="Heuristic: greedy sequential alignment or the spectral sign vector.")
    N: int = Field(1000, ge=2, description="Number of spins.")
    samples: int = Field(50, ge=1, description="Number of disorder draws.")


class PressureParams(_Params):
    N: int = Field(16, ge=1, le=24, description="Number of spins (exact enumeration).")
    beta: float = Field(0.5, ge=0.0, description="Inverse temperature.")
    h: float = Field(0.0, description="External field.")
    samples: int = Field(100, ge=1, description="Number of disorder draws.")
    variant: Literal["classic", "diagonal"] = Field("classic", description="Hamiltonian variant.")


class SuperaddParams(_Params):
    N: int = Field(4, ge=1, description="First system size.")
    M: int = Field(4, ge=1, description="Second system size.")
    beta: float = Field(0.5, ge=0.0, description="Inverse temperature.")
    h: float = Field(0.0, description="External field.")
    samples: int = Field(1000, ge=1, description="Disorder draws (or Monte Carlo samples per node for the interpolation method).")
    method: Literal["enumeration", "interpolation"] = Field(
        "enumeration",
        description="enumeration: Q_{N+M} − Q_N − Q_M from exact partition functions; "
        "interpolation: Gauss–Legendre integral of the interpolation derivative.",
    )


class IncrementParams(_Params):
    N: int = Field(12, ge=0, description="Reservoir size.")
    M: int = Field(2, ge=1, description="Number of added spins.")
    beta: float = Field(1.0, ge=0.0, description="Inverse temperature.")
    h: float = Field(0.0, description="External field.")
    samples: int = Field(200, ge=1, description="Number of disorder draws.")
    variant: Literal["classic", "diagonal"] = Field("diagonal", description="Hamiltonian variant.")


class RemQsParams(_Params):
    x: float = Field(0.5, gt=0.0, lt=1.0, description="REM exponent x.")
    epsilon: float = Field(1e-4, gt=0.0, description="Lower cutoff of the point process.")
    law: str = Field("lognormal:0.5", description="Increment law, e.g. lognormal:0.5, two-point:1,2,0.5 or point:2.")
    top_n: int = Field(20, ge=1, description="Number of leading ranks compared.")
    trials: int = Field(2000, ge=2, description="Ensemble size.")
    mode: Literal["normalized", "corrected", "uncorrected"] = Field("normalized", description="Quasi-stationarity form.")
    test: Literal["quasi-stationarity", "tilt"] = Field("quasi-stationarity", description="Which REM law to test.")

    @field_validator("law")
    @classmethod
    def _law(cls, v: str) -> str:
        return _checked(get_increment_law, v)


class CascadeOverlapParams(_Params):
    x: str = Field("0.3,0.7:0.2,0.6", description="Order parameter 'x1,x2:q1,q2'.")
    m: int = Field(200, ge=1, description="Atoms kept per cascade node.")
    cascades: int = Field(2000, ge=1, description="Number of cascades.")
    pairs: int = Field(100, ge=1, description="Replica pairs drawn per cascade.")

    @field_validator("x")
    @classmethod
    def _x(cls, v: str) -> str:
        return _checked(parse_order_parameter, v)


class CascadeQsParams(_Params):
    x: str = Field("0.5:0.4", description="Order parameter 'x1,x2:q1,q2'.")
    m: int = Field(200, ge=1, description="Atoms kept per cascade node.")
    psi: str = Field("lncosh:1,0", description="Reweighting function: lncosh:beta,h, linear:slope, sigmoid:a,s or constant:c.")
    top_n: int = Field(20, ge=1, description="Number of leading ranks compared.")
    trials: int = Field(2000, ge=2, description="Ensemble size.")
    reference_x: Optional[str] = Field(None, description="Order parameter of the fresh cascades (negative control); defaults to x.")

    @field_validator("x", "reference_x")
    @classmethod
    def _x(cls, v: Optional[str]) -> Optional[str]:
        return v if v is None else _checked(parse_order_parameter, v)

    @field_validator("psi")
    @classmethod
    def _psi(cls, v: str) -> str:
        return _checked(get_psi_function, v)


class ParisiParams(_Params):
    x: str = Field("1.0:0.0", description="Order parameter 'x1,x2:q1,q2'.")
    beta: float = Field(1.0, ge=0.0, description="Inverse temperature.")
    h: float = Field(0.0, description="External field.")
    covariance: str = Field("2:1", description="Mixture coefficients 'p:c_p,...' of f(q) = Σ c_p q^p.")
    quad_order: int = Field(40, ge=20, description="Gauss–Hermite order.")
    grid_step: float = Field(0.025, gt=0.0, le=0.05, description="y-grid spacing.")

    @field_validator("x")
    @classmethod
    def _x(cls, v: str) -> str:
        return _checked(parse_order_parameter, v)

    @field_validator("covariance")
    @classmethod
    def _covariance(cls, v: str) -> str:
        return _checked(parse_covariance, v)


class GFunctionalParams(_Params):
    source: Literal["cascade", "sk"] = Field("cascade", description="ROSt source.")
    x: str = Field("0.5:0.4", description="Order parameter of the cascade source.")
    m: int = Field(200, ge=1, description="Atoms kept per cascade node.")
    N: int = Field(12, ge=1, le=24, description="Reservoir size of the SK Gibbs source.")
    M: int = Field(4, ge=1, description="Number of added spins.")
    beta: float = Field(1.0, ge=0.0, description="Inverse temperature.")
    h: float = Field(0.0, description="External field.")
    samples: int = Field(1000, ge=1, description="Outer samples.")

    @field_validator("x")
    @classmethod
    def _x(cls, v: str) -> str:
        return _checked(parse_order_parameter, v)


class GuerraParams(_Params):
    N: int = Field(16, ge=1, le=24, description="Number of spins.")
    x: str = Field("1.0:0.0", description="Order parameter 'x1,x2:q1,q2'.")
    beta: float = Field(0.5, ge=0.0, description="Inverse temperature.")
    h: float = Field(0.0, description="External field.")
    samples: int = Field(200, ge=1, description="Number of disorder draws.")
    variant: Literal["classic", "diagonal"] = Field("diagonal", description="Hamiltonian variant of the finite-N pressure.")

    @field_validator("x")
    @classmethod
    def _x(cls, v: str) -> str:
        return _checked(parse_order_parameter, v)


class VariationalParams(_Params):
    k: int = Field(1, ge=0, le=3, description="Number of levels (0 is replica symmetric).")
    beta: float = Field(2.0, ge=0.0, description="Inverse temperature.")
    h: float = Field(0.0, description="External field.")
    restarts: int = Field(8, ge=1, description="Nelder–Mead restarts.")
    quad_order: int = Field(40, ge=20, description="Gauss–Hermite order.")
    grid_step: float = Field(0.025, gt=0.0, le=0.05, description="y-grid spacing.")


class DiffIdentityParams(_Params):
    n: int = Field(2, ge=1, le=8, description="Number of Gaussian coordinates.")
    rho: float = Field(0.5, ge=-1.0, le=1.0, description="End covariance (1 − rho) I + rho 11ᵀ; the path starts at I.")
    beta: float = Field(1.0, ge=0.0, description="Inverse temperature of the log-sum-exp test function.")
    t: float = Field(0.5, ge=0.0, le=1.0, description="Point on the covariance path.")
    samples: int = Field(1_000_000, ge=2, description="Monte Carlo samples.")
    method: Literal["quadrature", "monte-carlo"] = Field("quadrature", description="Quadrature oracle (n <= 2) or Monte Carlo.")


class AppendixBParams(_Params):
    sequence: Literal["linear", "sqrt", "counterexample"] = Field(
        "linear", description="linear: Q_N = slope·N; sqrt: Q_N = N − √N; counterexample: Q_N = N + (−1)^N."
    )
    length: int = Field(64, ge=2, description="Truncation length.")
    window: int = Field(8, ge=1, description="Window of the incremental estimate.")
    slope: float = Field(1.0, description="Slope of the linear sequence.")

    @model_validator(mode="after")
    def _window(self) -> "AppendixBParams":
        if self.window >= self.length:
            raise ValueError(f"window ({self.window}) must be smaller than length ({self.length})")
        return self


SUBCOMMAND_PARAMS: Dict[str, Type[_Params]] = {
    "ground-state": GroundStateParams,
    "pressure": PressureParams,
    "superadd": SuperaddParams,
    "increment": IncrementParams,
    "rem-qs": RemQsParams,
    "cascade-overlap": CascadeOverlapParams,
    "cascade-qs": CascadeQsParams,
    "parisi": ParisiParams,
    "g-functional": GFunctionalParams,
    "guerra": GuerraParams,
    "variational": VariationalParams,
    "diff-identity": DiffIdentityParams,
    "appendix-b": AppendixBParams,
}

Subcommand = Literal[
    "ground-state", "pressure", "superadd", "increment", "rem-qs", "cascade-overlap", "cascade-qs",
    "parisi", "g-functional", "guerra", "variational", "diff-identity", "appendix-b",
]


class RunConfig(BaseModel):
    """
    One resolved run. `params` is validated against the subcommand's model
    and stored with every default filled in.
    """

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_version: Literal[1] = Field(SCHEMA_VERSION, alias="schema", description="Config schema version.")
    subcommand: Subcommand = Field(..., description="Experiment to run.")
    params: Dict[str, Any] = Field(default_factory=dict, description="Subcommand parameters.")
    seed: int = Field(0, ge=0, le=UINT64_MAX, description="Root seed (64-bit).")
    output: Optional[str] = Field(None, description="Output path; stdout when omitted.")
    format: Literal["json", "csv", "svg"] = Field("json", description="Output format.")
    threads: int = Field(default_factory=default_threads, ge=1, description="Worker threads.")

    @model_validator(mode="after")
    def _resolve_params(self) -> "RunConfig":
        model = SUBCOMMAND_PARAMS[self.subcommand].model_validate(self.params)
        self.params = model.model_dump()
        return self

    def typed_params(self) -> _Params:
        return SUBCOMMAND_PARAMS[self.subcommand].model_validate(self.params)

    def canonical(self) -> Dict[str, Any]:
        """Result-determining fields only (output path and thread count excluded)."""
        return self.model_dump(by_alias=True, exclude={"output", "threads"})

    def config_hash(self) -> str:
        text = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()
