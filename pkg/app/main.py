from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
import time

from app import config
from app.api import analysis, calibration, races, tracks, trajectories
from app.exceptions import RaceSimError

config.configure_logging()

# Create FastAPI app
app = FastAPI(
    title="Race Autonomy Simulator API",
    description="Deterministic drone-racing simulation: tracks, reference trajectories, calibration and races",
    version="0.1.0"
)

# Set up CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# Add request processing time header middleware
@app.middleware("http")
async def add_process_time_header(request: Request, call_next):
    start_time = time.time()
    response = await call_next(request)
    process_time = time.time() - start_time
    response.headers["X-Process-Time"] = str(process_time)
    return response


@app.exception_handler(RaceSimError)
async def race_sim_error_handler(request: Request, exc: RaceSimError):
    return JSONResponse(status_code=400, content={"detail": f"{type(exc).__name__}: {exc}"})


# Include routers
app.include_router(tracks.router)
app.include_router(trajectories.router)
app.include_router(calibration.router)
app.include_router(races.router)
app.include_router(analysis.router)


@app.get("/")
def read_root():
    return {"message": "Welcome to the Race Autonomy Simulator API"}


@app.get("/health")
def health_check():
    return {"status": "healthy"}
