"""Thin client for the solver service.

The CLI talks to the service exclusively through this client.  With a
base URL it speaks HTTP via httpx to a remote server; without one it
dispatches in process against the ASGI app (same routes, same models, no
socket), so batch workflows need no running daemon.
"""

from __future__ import annotations

import asyncio

import httpx

__all__ = ["ServiceClient", "ServiceError"]


class ServiceError(RuntimeError):
    """Non-2xx response from the service."""

    def __init__(self, status_code: int, detail: str):
        super().__init__(f"service error {status_code}: {detail}")
        self.status_code = status_code
        self.detail = detail


class _InProcessTransport(httpx.BaseTransport):
    """Synchronous httpx transport dispatching straight into an ASGI app."""

    def __init__(self, app):
        self._asgi = httpx.ASGITransport(app=app)

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        async def dispatch() -> tuple[int, httpx.Headers, bytes]:
            response = await self._asgi.handle_async_request(request)
            body = await response.aread()
            await response.aclose()
            return response.status_code, response.headers, body

        status, headers, body = asyncio.run(dispatch())
        headers = httpx.Headers(
            [(k, v) for k, v in headers.items() if k.lower() != "content-length"])
        return httpx.Response(status_code=status, headers=headers, content=body,
                              request=request)


class ServiceClient:
    def __init__(self, base_url: str | None = None):
        if base_url:
            self._client = httpx.Client(base_url=base_url, timeout=None)
        else:
            from .service.app import app
            self._client = httpx.Client(transport=_InProcessTransport(app),
                                        base_url="http://invchain.local")

    def post(self, path: str, payload: dict) -> dict:
        resp = self._client.post(path, json=payload)
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise ServiceError(resp.status_code, str(detail))
        return resp.json()

    def get(self, path: str) -> dict:
        resp = self._client.get(path)
        if resp.status_code >= 400:
            raise ServiceError(resp.status_code, resp.text)
        return resp.json()

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> "ServiceClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
