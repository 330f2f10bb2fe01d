# app/main.py
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from app.api.endpoints import router as api_router
from app.core.config import settings
from app.core.logging import setup_logging

setup_logging(settings.LOG_LEVEL)

app = FastAPI(
    title="Latency PTAS Solver Service",
    description="Approximation schemes for traveling repairman and precedence-constrained scheduling, with exact oracles.",
    version="1.0.0"
)

origins = [
    "http://localhost",
    "http://localhost:3000",
    "http://localhost:8080",
]

app.add_middleware(
    CORSMiddleware,
    allow_origins=origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(RequestValidationError)
async def validation_error_handler(request: Request, exc: RequestValidationError):
    return JSONResponse(status_code=400, content={"detail": [str(e.get("msg")) for e in exc.errors()]})


app.include_router(api_router, prefix="/api/v1")


@app.get("/")
def read_root():
    return {"status": "Latency PTAS solver service is running"}
