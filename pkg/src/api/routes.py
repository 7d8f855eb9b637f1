"""API routes: northbound controller interface and node-local key delivery."""

import time
from typing import Dict, List, NoReturn

from fastapi import APIRouter, Depends, HTTPException, status

from .dependencies import get_network, get_network_lock
from ..config import settings
from ..harness import MetricsReport, QKDNetwork, collect_metrics
from ..models.api import (
    AdvanceRequest, CloseSessionResponse, ConnectAppRequest, ErrorResponse, GetKeyRequest,
    GetKeyWithIdsRequest, HealthResponse, KeyContainer, OpenSessionRequest, PhysicalLinkRequest,
    RateProfileRequest, RelayRequest, SessionResponse, SimulationStatus, VirtualLinkRequest)
from ..models.control import ControllerState, NodeStatusReport
from ..models.keys import RelayRecord
from ..models.topology import ApplicationRecord, Link, NodeDescriptor
from ..utils.exceptions import QKDNetworkError
from ..utils.logging_config import log_error, log_step

router = APIRouter()

_started_at = time.time()

_CONFLICT_CODES = {
    "DUPLICATE_APPLICATION", "DUPLICATE_LINK", "DUPLICATE_NODE", "DUPLICATE_SESSION",
    "INTERFACE_BUSY", "INTERFACE_CONFLICT", "LINK_EXISTS", "KEY_DEPLETION",
    "RELAY_KEY_DEPLETION", "KEY_REPLAY_REFUSED", "SESSION_CLOSED",
}


def status_for(error: QKDNetworkError) -> int:
    code = error.error_code or ""
    if code.startswith("UNKNOWN_") or code == "UNREGISTERED_APPLICATION":
        return status.HTTP_404_NOT_FOUND
    if code in _CONFLICT_CODES:
        return status.HTTP_409_CONFLICT
    return status.HTTP_400_BAD_REQUEST


def _raise_http(error: QKDNetworkError, operation: str) -> NoReturn:
    log_error(operation, error.message, error_code=error.error_code)
    body = ErrorResponse(message=error.message, error_code=error.error_code, details=error.details)
    raise HTTPException(status_code=status_for(error), detail=body.model_dump(mode="json"))


@router.get("/health", response_model=HealthResponse)
async def health_check(network: QKDNetwork = Depends(get_network)):
    """Health check endpoint."""
    log_step("health_check", endpoint="/health")
    return HealthResponse(
        status="healthy",
        version=settings.app_version,
        uptime_seconds=time.time() - _started_at,
        environment=settings.environment,
        simulated_time_s=network.now,
    )


# Northbound: topology

@router.post("/nodes", response_model=NodeDescriptor, status_code=status.HTTP_201_CREATED)
async def register_node(descriptor: NodeDescriptor, network: QKDNetwork = Depends(get_network)):
    async with get_network_lock():
        try:
            network.add_node(descriptor)
        except QKDNetworkError as e:
            _raise_http(e, "register_node")
    return network.controller.topology.nodes[descriptor.node_id]


@router.post("/links/physical", response_model=Link, status_code=status.HTTP_201_CREATED)
async def create_physical_link(request: PhysicalLinkRequest, network: QKDNetwork = Depends(get_network)):
    async with get_network_lock():
        try:
            return network.create_physical_link(**request.model_dump(exclude={"fiber", "rate_profile"}),
                                                fiber=request.fiber, rate_profile=request.rate_profile)
        except QKDNetworkError as e:
            _raise_http(e, "create_physical_link")


@router.post("/links/virtual", response_model=Link, status_code=status.HTTP_201_CREATED)
async def create_virtual_link(request: VirtualLinkRequest, network: QKDNetwork = Depends(get_network)):
    async with get_network_lock():
        try:
            return network.create_virtual_link(request.node_a, request.node_b, request.constraints,
                                               request.path, request.link_id)
        except QKDNetworkError as e:
            _raise_http(e, "create_virtual_link")


@router.put("/links/{link_id}/profile", response_model=Link)
async def set_rate_profile(link_id: str, request: RateProfileRequest,
                           network: QKDNetwork = Depends(get_network)):
    async with get_network_lock():
        try:
            return network.set_rate_profile(link_id, request.rate_profile)
        except QKDNetworkError as e:
            _raise_http(e, "set_rate_profile")


@router.delete("/links/{link_id}", response_model=List[str])
async def teardown_link(link_id: str, network: QKDNetwork = Depends(get_network)):
    """Take a link down; returns every link removed, dependent virtual links included."""
    async with get_network_lock():
        try:
            return network.teardown_link(link_id)
        except QKDNetworkError as e:
            _raise_http(e, "teardown_link")


@router.post("/links/virtual/{link_id}/relay", response_model=RelayRecord)
async def request_relay(link_id: str, request: RelayRequest, network: QKDNetwork = Depends(get_network)):
    async with get_network_lock():
        try:
            return network.request_relay(link_id, request.length_bits, request.source)
        except QKDNetworkError as e:
            _raise_http(e, "request_relay")


@router.get("/state", response_model=ControllerState)
async def controller_state(network: QKDNetwork = Depends(get_network)):
    return network.controller.controller_state()


@router.get("/applications", response_model=Dict[str, ApplicationRecord])
async def applications(network: QKDNetwork = Depends(get_network)):
    return dict(sorted(network.controller.applications.items()))


@router.get("/metrics", response_model=MetricsReport)
async def metrics(network: QKDNetwork = Depends(get_network)):
    return collect_metrics(network, "networked", network.now)


# Simulation clock

@router.post("/simulation/advance", response_model=SimulationStatus)
async def advance(request: AdvanceRequest, network: QKDNetwork = Depends(get_network)):
    async with get_network_lock():
        network.advance(request.seconds)
    return await simulation_status(network)


@router.get("/simulation", response_model=SimulationStatus)
async def simulation_status(network: QKDNetwork = Depends(get_network)):
    links = network.controller.topology.links
    return SimulationStatus(
        now=network.now,
        nodes=len(network.controller.topology.nodes),
        links=len(links),
        active_links=sum(1 for l in links.values() if l.is_active),
        pending_events=network.events.pending,
    )


# Node-local application endpoint

@router.post("/nodes/{node_id}/apps", response_model=ApplicationRecord, status_code=status.HTTP_201_CREATED)
async def connect_application(node_id: str, request: ConnectAppRequest,
                              network: QKDNetwork = Depends(get_network)):
    async with get_network_lock():
        try:
            return network.connect_application(node_id, request.app_id, request.peer_app)
        except QKDNetworkError as e:
            _raise_http(e, "connect_application")


@router.delete("/nodes/{node_id}/apps/{app_id}", status_code=status.HTTP_204_NO_CONTENT)
async def disconnect_application(node_id: str, app_id: str, network: QKDNetwork = Depends(get_network)):
    async with get_network_lock():
        try:
            network.disconnect_application(node_id, app_id)
        except QKDNetworkError as e:
            _raise_http(e, "disconnect_application")


@router.post("/nodes/{node_id}/sessions", response_model=SessionResponse, status_code=status.HTTP_201_CREATED)
async def open_session(node_id: str, request: OpenSessionRequest, network: QKDNetwork = Depends(get_network)):
    async with get_network_lock():
        try:
            session = network.open_session(node_id, request.app_id, request.peer_node,
                                           request.peer_app, request.qos)
        except QKDNetworkError as e:
            _raise_http(e, "open_session")
    return SessionResponse(**session.model_dump(include=set(SessionResponse.model_fields)))


@router.post("/nodes/{node_id}/keys/get", response_model=KeyContainer)
async def get_key(node_id: str, request: GetKeyRequest, network: QKDNetwork = Depends(get_network)):
    async with get_network_lock():
        try:
            keys = network.get_key(node_id, request.session_id, request.app_id,
                                   request.count, request.size_bits)
        except QKDNetworkError as e:
            _raise_http(e, "get_key")
    return KeyContainer.from_keys(request.session_id, keys)


@router.post("/nodes/{node_id}/keys/get_with_ids", response_model=KeyContainer)
async def get_key_with_ids(node_id: str, request: GetKeyWithIdsRequest,
                           network: QKDNetwork = Depends(get_network)):
    async with get_network_lock():
        try:
            keys = network.get_key_with_ids(node_id, request.session_id, request.app_id, request.key_ids)
        except QKDNetworkError as e:
            _raise_http(e, "get_key_with_ids")
    return KeyContainer.from_keys(request.session_id, keys)


@router.delete("/nodes/{node_id}/sessions/{session_id}", response_model=CloseSessionResponse)
async def close_session(node_id: str, session_id: str, network: QKDNetwork = Depends(get_network)):
    async with get_network_lock():
        try:
            released = network.close_session(node_id, session_id)
        except QKDNetworkError as e:
            _raise_http(e, "close_session")
    return CloseSessionResponse(session_id=session_id, released_bits=released)


@router.get("/nodes/{node_id}/status", response_model=NodeStatusReport)
async def node_status(node_id: str, network: QKDNetwork = Depends(get_network)):
    try:
        return network.agent(node_id).report_status()
    except QKDNetworkError as e:
        _raise_http(e, "node_status")
