import asyncio
import logging
from fractions import Fraction

from fastapi import APIRouter, HTTPException

from app.api.models import (
    GenerateRequest,
    GenerateResponse,
    OracleRequest,
    OracleResponse,
    SolveResponse,
    SolveSchedRequest,
    SolveTrpRequest,
    WindowModel,
)
from app.core.errors import (
    BudgetExceededError,
    InfeasibleError,
    InstanceFormatError,
    InvalidInstanceError,
    LatencyPtasError,
    NotFoundError,
    ParameterError,
)
from app.formats import GeneratorKind
from app.services import solve_service
from app.services.generators import generate
from app.services.instances import parse_instance, serialize_instance

logger = logging.getLogger(__name__)

router = APIRouter()


def _http_error(exc: LatencyPtasError) -> HTTPException:
    """Map a solver error onto an HTTP status."""
    if isinstance(exc, (InstanceFormatError, InvalidInstanceError, ParameterError)):
        status = 400
    elif isinstance(exc, BudgetExceededError):
        status = 413
    elif isinstance(exc, (InfeasibleError, NotFoundError)):
        status = 422
    else:
        # broken invariants and anything unexpected
        status = 500
    logger.warning("✗ request failed (%d): %s", status, exc)
    return HTTPException(status_code=status, detail=str(exc))


def _to_response(report: solve_service.SolveReport) -> SolveResponse:
    ratio = report.ratio
    return SolveResponse(
        kind=report.kind.value,
        n=report.n,
        eps=str(report.eps),
        K=report.K,
        h0=report.h0,
        gamma=report.gamma,
        bound=str(report.bound),
        realized=str(report.realized),
        oracle=None if report.oracle is None else str(report.oracle),
        ratio=None if ratio is None else float(ratio),
        windows=[WindowModel(index=w.index, target=w.target, value=str(w.value)) for w in report.windows],
        diagnostics=list(report.diagnostics),
        solution=report.solution,
    )


@router.post("/solve_trp", response_model=SolveResponse)
async def solve_trp_endpoint(request: SolveTrpRequest):
    """Approximate traveling repairman on a tree, euclid or matrix instance."""
    try:
        inst = parse_instance(request.instance)
        # solvers are CPU bound, keep the event loop free
        report = await asyncio.to_thread(
            solve_service.solve_trp, inst, Fraction(request.eps), request.K, request.portals,
            request.retries, request.seed, request.oracle, None, request.scale,
        )
    except LatencyPtasError as exc:
        raise _http_error(exc)
    return _to_response(report)


@router.post("/solve_sched", response_model=SolveResponse)
async def solve_sched_endpoint(request: SolveSchedRequest):
    try:
        inst = parse_instance(request.instance)
        report = await asyncio.to_thread(
            solve_service.solve_sched, inst, Fraction(request.eps), request.K, request.oracle,
        )
    except LatencyPtasError as exc:
        raise _http_error(exc)
    return _to_response(report)


@router.post("/oracle", response_model=OracleResponse)
async def oracle_endpoint(request: OracleRequest):
    try:
        inst = parse_instance(request.instance)
        report = await asyncio.to_thread(solve_service.run_oracle, inst)
    except LatencyPtasError as exc:
        raise _http_error(exc)
    return OracleResponse(kind=report.kind.value, n=report.n, optimum=str(report.value), solution=report.solution)


@router.post("/generate/{kind}", response_model=GenerateResponse)
async def generate_endpoint(kind: GeneratorKind, request: GenerateRequest):
    params = request.model_dump(exclude={"seed"}, exclude_none=True)
    try:
        inst = generate(kind, request.seed, **params)
    except LatencyPtasError as exc:
        raise _http_error(exc)
    return GenerateResponse(kind=kind.value, instance=serialize_instance(inst))
