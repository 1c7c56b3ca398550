"""Minimal scikit-learn style parameter handling.

Estimators in this package expose ``get_params`` / ``set_params`` so they can
be cloned and composed by the wider sklearn ecosystem without this package
depending on scikit-learn itself.
"""
import inspect


class ParamsMixin:
    """get_params/set_params driven by the ``__init__`` signature.

    Subclasses must store every constructor argument on ``self`` under the
    same name, as scikit-learn estimators do.
    """

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [p.name for p in sig.parameters.values()
                if p.name != "self" and p.kind != p.VAR_KEYWORD]

    def get_params(self, deep=True):
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(
                    f"invalid parameter {key!r} for {type(self).__name__}; "
                    f"valid parameters are {sorted(valid)}")
            setattr(self, key, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"
