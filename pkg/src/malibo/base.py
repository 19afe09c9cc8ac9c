"""Minimal estimator plumbing: parameter introspection and fitted-state checks."""

from __future__ import annotations

import inspect
from typing import Any


class NotFittedError(RuntimeError):
    """Raised when a fitted attribute is accessed before ``fit``."""


class ParamsMixin:
    """sklearn-style ``get_params``/``set_params`` backed by ``__init__`` signature.

    Subclasses must store every constructor argument under the same attribute
    name, which every estimator in this package does.
    """

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind != p.VAR_KEYWORD and p.kind != p.VAR_POSITIONAL
        ]

    def get_params(self, deep: bool = True) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for name in self._param_names():
            value = getattr(self, name)
            if deep and isinstance(value, ParamsMixin):
                for sub_name, sub_value in value.get_params(deep=True).items():
                    out[f"{name}__{sub_name}"] = sub_value
            out[name] = value
        return out

    def set_params(self, **params: Any) -> "ParamsMixin":
        valid = set(self._param_names())
        for key, value in params.items():
            name, _, sub_key = key.partition("__")
            if name not in valid:
                raise ValueError(f"unknown parameter {key!r} for {type(self).__name__}")
            if sub_key:
                getattr(self, name).set_params(**{sub_key: value})
            else:
                setattr(self, name, value)
        return self


def check_is_fitted(estimator: Any, *attributes: str) -> None:
    """Raise :class:`NotFittedError` unless all fitted attributes are present."""
    missing = [a for a in attributes if getattr(estimator, a, None) is None]
    if missing:
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted (missing {', '.join(missing)}); "
            "call fit() first"
        )
