"""FastAPI application for the networked mode of the SDQKD emulator."""

from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, RedirectResponse
import uvicorn

from .config import settings
from .api.dependencies import get_network
from .api.routes import router as api_router, status_for
from .models.api import ErrorResponse
from .utils.exceptions import QKDNetworkError
from .utils.logging_config import log_error, log_step


@asynccontextmanager
async def lifespan(app: FastAPI):
    # build the served network before the first request, honouring dependency overrides
    network = app.dependency_overrides.get(get_network, get_network)()
    log_step("complete", message="network ready", nodes=len(network.controller.topology.nodes),
             links=len(network.controller.topology.links), now=network.now)
    yield
    log_step("complete", message="networked mode stopped", now=network.now,
             relays=len(network.relay_records()))


app = FastAPI(
    title=settings.app_name,
    version=settings.app_version,
    description="Software-defined QKD network emulator: controller northbound API and node-local key delivery",
    docs_url="/docs",
    redoc_url="/redoc",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

app.include_router(api_router, prefix=settings.api_prefix)

log_step("complete", message="FastAPI application created", prefix=settings.api_prefix,
         version=settings.app_version)


@app.exception_handler(QKDNetworkError)
async def network_error_handler(request: Request, error: QKDNetworkError):
    """Domain errors that escape a route still come back as structured bodies."""
    log_error("unhandled_domain_error", error.message, path=request.url.path, error_code=error.error_code)
    body = ErrorResponse(message=error.message, error_code=error.error_code, details=error.details)
    return JSONResponse(status_code=status_for(error), content={"detail": body.model_dump(mode="json")})


@app.get("/")
async def root():
    return RedirectResponse(url="/docs")


@app.get("/health")
async def health_check():
    return {"status": "healthy", "service": settings.app_name, "version": settings.app_version}


if __name__ == "__main__":
    uvicorn.run("src.main:app", host=settings.api_host, port=settings.api_port, reload=settings.debug)
