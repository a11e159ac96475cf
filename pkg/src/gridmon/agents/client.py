"""Typed HTTP clients for the agent endpoints.

Peer errors are re-raised as the original exception types (the wire
carries the type name), so calling through HTTP feels like calling the
engine directly.
"""

from __future__ import annotations

import logging
from typing import Iterable, Iterator

import requests

from gridmon.agents.httpd import raise_for_error_body
from gridmon.errors import ProtocolError
from gridmon.model import ConsumerEntry, ProducerEntry, ProducerKind
from gridmon.query_exec import ResultTable
from gridmon.relq import QueryType, TableDef, parse_create_table

log = logging.getLogger(__name__)


class HttpClient:
    def __init__(self, base_url: str, timeout: float = 5.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = requests.Session()

    def _request(self, method: str, path: str, body: dict | None = None,
                 params: dict | None = None, timeout: float | None = None) -> dict:
        url = f"{self.base_url}{path}"
        try:
            response = self.session.request(
                method, url, json=body, params=params, timeout=timeout or self.timeout
            )
        except requests.RequestException as exc:
            raise ProtocolError(f"{method} {url}: {exc}") from None
        try:
            payload = response.json()
        except ValueError:
            payload = {}
        if response.status_code != 200:
            raise_for_error_body(payload, response.status_code)
        return payload

    def get(self, path: str, params: dict | None = None, timeout: float | None = None) -> dict:
        return self._request("GET", path, params=params, timeout=timeout)

    def post(self, path: str, body: dict | None = None, timeout: float | None = None) -> dict:
        return self._request("POST", path, body=body, timeout=timeout)

    def delete(self, path: str, timeout: float | None = None) -> dict:
        return self._request("DELETE", path, timeout=timeout)

    def close(self) -> None:
        self.session.close()


class RegistryClient(HttpClient):
    def create_table(self, ddl: str) -> str:
        return self.post("/registry/tables", {"ddl": ddl})["table"]

    def list_tables(self) -> list[dict]:
        return self.get("/registry/tables")["tables"]

    def get_table(self, name: str) -> TableDef:
        return parse_create_table(self.get(f"/registry/tables/{name}")["ddl"])

    def register_producer(
        self,
        endpoint: str,
        table: str,
        view: str,
        kind: ProducerKind,
        interval_sec: int,
        producer_id: str | None = None,
    ) -> ProducerEntry:
        body = {
            "endpoint": endpoint,
            "table": table,
            "view": view,
            "kind": kind.value,
            "terminationIntervalSec": interval_sec,
        }
        if producer_id is not None:
            body["producerId"] = producer_id
        return ProducerEntry.from_json(self.post("/registry/producers", body))

    def register_consumer(
        self,
        endpoint: str,
        query: str,
        query_type: QueryType,
        interval_sec: int,
        consumer_id: str | None = None,
    ) -> tuple[ConsumerEntry, list[ProducerEntry]]:
        body = {
            "endpoint": endpoint,
            "query": query,
            "queryType": query_type.value,
            "terminationIntervalSec": interval_sec,
        }
        if consumer_id is not None:
            body["consumerId"] = consumer_id
        payload = self.post("/registry/consumers", body)
        return (
            ConsumerEntry.from_json(payload["consumer"]),
            [ProducerEntry.from_json(p) for p in payload["producers"]],
        )

    def heartbeat(self, client_id: str) -> int:
        return self.post("/registry/heartbeat", {"id": client_id})["terminationTime"]

    def lookup(
        self,
        table: str,
        query_type: QueryType,
        where: str = "",
        aliases: Iterable[str] = (),
    ) -> list[ProducerEntry]:
        params = {"table": table, "type": query_type.value}
        if where:
            params["where"] = where
        alias_list = ",".join(aliases)
        if alias_list:
            params["aliases"] = alias_list
        payload = self.get("/registry/producers", params=params)
        return [ProducerEntry.from_json(p) for p in payload["producers"]]

    def unregister_producer(self, producer_id: str) -> None:
        self.delete(f"/registry/producers/{producer_id}")

    def unregister_consumer(self, consumer_id: str) -> None:
        self.delete(f"/registry/consumers/{consumer_id}")


class ProducerClient(HttpClient):
    """Client for one producer engine resource (base_url ends /producer/{id})."""

    def insert_sql(self, sql: str, owner_token: str | None = None) -> int:
        body: dict = {"sql": sql}
        if owner_token:
            body["ownerToken"] = owner_token
        return self.post("/insert", body)["accepted"]

    def insert_tuples(self, table: str, tuples: list[dict], owner_token: str | None = None) -> int:
        body: dict = {"table": table, "tuples": tuples}
        if owner_token:
            body["ownerToken"] = owner_token
        return self.post("/insert", body)["accepted"]

    def query(self, sql: str, query_type: QueryType, timeout: float | None = None) -> ResultTable:
        payload = self.post("/query", {"sql": sql, "type": query_type.value}, timeout=timeout)
        return ResultTable.from_json(payload)

    def subscribe(
        self,
        sink: str,
        table: str | None = None,
        where: str = "",
        replay: bool = False,
    ) -> str:
        body: dict = {"sink": sink, "replay": replay}
        if table:
            body["table"] = table
        if where:
            body["where"] = where
        return self.post("/subscribe", body)["subscriptionId"]

    def unsubscribe(self, subscription_id: str) -> None:
        self.delete(f"/subscribe/{subscription_id}")

    def stats(self) -> dict:
        return self.get("/stats")


def push_stream(sink_endpoint: str, chunks: Iterator[bytes], params: dict) -> None:
    """Long-lived chunked POST of tuple lines to a consumer sink.

    Returns when the chunk iterator is exhausted; raises on transport
    failure so the caller can retry or give up.
    """
    with requests.Session() as session:
        response = session.post(sink_endpoint, params=params, data=chunks, timeout=None)
        if response.status_code != 200:
            try:
                payload = response.json()
            except ValueError:
                payload = {}
            raise_for_error_body(payload, response.status_code)
