"""Remote language-model backends (OpenAI-compatible HTTP and Gemini)."""
from __future__ import annotations

import threading
from typing import Any, Dict, List, Sequence

import httpx
from tenacity import retry, retry_if_exception_type, stop_after_attempt, wait_fixed

from ..config import get_logger
from ..errors import TransportError
from .prompts import SYSTEM_PROMPT
from .tasks import PromptTask

_logger = get_logger("gateway.remote")

# One retry for network failures; schema retries are handled by the gateway.
transport_retry = retry(
    retry=retry_if_exception_type(TransportError),
    stop=stop_after_attempt(2),
    wait=wait_fixed(0.5),
    reraise=True,
)


class OpenAIChatBackend:
    """POST ``{model, messages, temperature}`` and read ``choices[0].message.content``."""

    name = "remote"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str,
        *,
        temperature: float = 0.0,
        timeout: float = 60.0,
        max_in_flight: int = 4,
        client: httpx.Client | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self._client = client or httpx.Client(timeout=timeout)
        self._headers = {"Authorization": f"Bearer {api_key}"}
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def generate(self, task: PromptTask, prompt: str, attempt: int) -> str:
        body = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": prompt},
            ],
            "temperature": self.temperature,
        }
        with self._slots:
            data = self._post(body)
        try:
            return str(data["choices"][0]["message"]["content"]).strip()
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"unexpected chat response shape: {str(data)[:200]}") from exc

    @transport_retry
    def _post(self, body: Dict[str, Any]) -> Any:
        try:
            response = self._client.post(self.endpoint, json=body, headers=self._headers)
            response.raise_for_status()
            return response.json()
        except (httpx.HTTPError, ValueError) as exc:
            _logger.warning("chat transport failure endpoint=%s error=%s", self.endpoint, exc)
            raise TransportError(f"chat request failed: {exc}") from exc

    def close(self) -> None:
        self._client.close()


def _extract_response_text(response: Any) -> str:
    text = getattr(response, "text", None) or getattr(response, "output_text", None)
    if isinstance(text, str) and text.strip():
        return text.strip()

    candidates = getattr(response, "candidates", None)
    if candidates:
        content = getattr(candidates[0], "content", None)
        parts = getattr(content, "parts", None) if content is not None else None
        if isinstance(parts, list):
            fragments: List[str] = []
            for part in parts:
                if hasattr(part, "text") and isinstance(part.text, str):
                    fragments.append(part.text)
                elif isinstance(part, dict) and isinstance(part.get("text"), str):
                    fragments.append(part["text"])
            if fragments:
                return "".join(fragments).strip()
    return str(response).strip()


class GeminiBackend:
    """google-genai backend; JSON output is requested through the response MIME type."""

    name = "gemini"

    def __init__(
        self,
        model: str,
        api_key: str,
        *,
        temperature: float = 0.0,
        max_in_flight: int = 4,
        client: Any | None = None,
    ) -> None:
        if client is None:
            from google import genai

            client = genai.Client(api_key=api_key)
        self._client = client
        self.model = model
        self.temperature = temperature
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def generate(self, task: PromptTask, prompt: str, attempt: int) -> str:
        contents: Sequence[Dict[str, Any]] = [{"role": "user", "parts": [{"text": prompt}]}]
        with self._slots:
            response = self._call(contents)
        return _extract_response_text(response)

    @transport_retry
    def _call(self, contents: Sequence[Dict[str, Any]]) -> Any:
        config = {
            "system_instruction": SYSTEM_PROMPT,
            "response_mime_type": "application/json",
            "temperature": self.temperature,
        }
        try:
            return self._client.models.generate_content(model=self.model, contents=contents, config=config)
        except Exception as exc:  # google-genai raises a family of API/transport errors
            _logger.warning("gemini transport failure model=%s error=%s", self.model, exc)
            raise TransportError(f"gemini request failed: {exc}") from exc


__all__ = ["OpenAIChatBackend", "GeminiBackend", "transport_retry"]
