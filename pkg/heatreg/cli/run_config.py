"""Flat key=value run configuration files.

One pair per line; blank lines and ``#`` comments are skipped. Keys are the
long option names of the chosen command, written with dashes or
underscores. Values from the file become parser defaults, so flags given on
the command line always win.
"""

import argparse
import logging
from pathlib import Path
from typing import Dict, List, Union

from pydantic import BaseModel, Field

from heatreg.errors import ConfigError

logger = logging.getLogger(__name__)

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def normalize_key(key: str) -> str:
    return key.strip().lstrip("-").replace("_", "-").lower()


def parse_config_text(text: str, source: str = "<config>") -> Dict[str, str]:
    """
    Parse key=value lines.

    Raises:
        ConfigError: a line has no '=' or an empty key, or a key repeats
    """
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"{source}:{lineno}: expected key=value, got '{raw.strip()}'",
                details={"line": lineno},
            )
        key, value = line.split("=", 1)
        key = normalize_key(key)
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key", details={"line": lineno})
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key '{key}'", details={"line": lineno, "key": key})
        values[key] = value.strip()
    return values


def option_actions(parser: argparse.ArgumentParser) -> Dict[str, argparse.Action]:
    """Optional arguments of a parser keyed by their long name without dashes."""
    actions: Dict[str, argparse.Action] = {}
    for action in parser._actions:
        if not action.option_strings or isinstance(action, argparse._HelpAction):
            continue
        longest = max(action.option_strings, key=len)
        actions[normalize_key(longest)] = action
    return actions


def _convert(key: str, raw: str, action: argparse.Action):
    if action.nargs == 0:
        lowered = raw.lower()
        if lowered in _TRUE:
            flag = True
        elif lowered in _FALSE:
            flag = False
        else:
            raise ConfigError(f"Key '{key}' expects a boolean, got '{raw}'", details={"key": key})
        # store_false switches hold the negated value
        return flag if action.const is True else not flag
    value = raw
    if action.type is not None:
        try:
            value = action.type(raw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid value '{raw}' for key '{key}': {e}", details={"key": key}) from e
    if action.choices is not None and value not in action.choices:
        raise ConfigError(
            f"Invalid value '{raw}' for key '{key}'; choose from {list(action.choices)}",
            details={"key": key, "choices": list(action.choices)},
        )
    return value


class RunConfig(BaseModel):
    """Key=value overrides for one command."""
    command: str
    values: Dict[str, str] = Field(default_factory=dict)
    source: str = "<config>"

    @classmethod
    def from_file(cls, path: Union[str, Path], command: str) -> "RunConfig":
        text = Path(path).read_text(encoding="utf-8")
        return cls(command=command, values=parse_config_text(text, str(path)), source=str(path))

    def validate_keys(self, valid: List[str]) -> None:
        """
        Raises:
            ConfigError: a key is not an option of the command; lists the valid keys
        """
        unknown = sorted(k for k in self.values if k not in valid)
        if unknown:
            raise ConfigError(
                f"Unknown key(s) {unknown} in {self.source} for command '{self.command}'. "
                f"Valid keys: {', '.join(sorted(valid))}",
                details={"unknown": unknown, "valid": sorted(valid)},
            )

    def apply(self, parser: argparse.ArgumentParser) -> None:
        """Install the file values as defaults of the command's parser."""
        actions = option_actions(parser)
        actions.pop("config", None)
        actions.pop("log-level", None)
        self.validate_keys(list(actions))
        defaults = {
            actions[key].dest: _convert(key, raw, actions[key])
            for key, raw in self.values.items()
        }
        parser.set_defaults(**defaults)
        logger.debug(f"Applied {len(defaults)} value(s) from {self.source} to '{self.command}'")
