"""
Pipeline configuration: defaults, JSON schema validation and hashing.
"""

import copy
import hashlib
import json
import logging

import jsonschema

import loadlab.exceptions as exceptions
import loadlab.utils as utils

_log = logging.getLogger(__name__)

DEFAULTS = {
    'artifact_dir': 'artifacts',
    'seed': 0,
    'threads': None,
    'inputs': {
        'telemetry': 'telemetry.csv',
        'credit': 'credit.csv',
        'meta': 'meta.csv',
        'strict': True,
    },
    'ingest': {
        'max_hold_minutes': 10,
        'min_ownership_days': 0,
    },
    'sample': {
        'days_per_household': 10,
        'target': 2000,
        'bins': 10,
    },
    'cluster': {
        'k_min': 2,
        'k_max': 8,
        'select_k': None,
        'solver': 'exact',
        'time_limit_s': 600,
        'restarts': 5,
        'require_proof': False,
    },
    'assign': {
        'batch_size': 50000,
    },
    'analyze': {
        'appliance_threshold_w': 50.0,
        'ur_threshold': 0.9,
        'min_households': 10,
        'confidence': 0.95,
        'daytime_hours': [6, 18],
        'smoothing_days': 15,
        'horizon_days': 730,
        'plots': True,
    },
}

_COUNT = {'type': 'integer', 'minimum': 1}
_OPTIONAL_COUNT = {'type': ['integer', 'null'], 'minimum': 1}
_SHARE = {'type': 'number', 'minimum': 0, 'maximum': 1}


def _section(properties, required=None):
    return {
        'type': 'object',
        'properties': properties,
        'required': required or [],
        'additionalProperties': False,
    }


SCHEMA = _section({
    'artifact_dir': {'type': 'string', 'minLength': 1},
    'seed': {'type': 'integer', 'minimum': 0},
    'threads': _OPTIONAL_COUNT,
    'inputs': _section({
        'telemetry': {'type': 'string'},
        'credit': {'type': 'string'},
        'meta': {'type': 'string'},
        'strict': {'type': 'boolean'},
    }, ['telemetry', 'credit', 'meta']),
    'ingest': _section({
        'max_hold_minutes': {'type': ['number', 'null'],
                             'exclusiveMinimum': 0},
        'min_ownership_days': {'type': 'integer', 'minimum': 0},
    }),
    'sample': _section({
        'days_per_household': _COUNT,
        'target': {'type': 'integer', 'minimum': 2},
        'bins': _COUNT,
    }),
    'cluster': _section({
        'k_min': _COUNT,
        'k_max': _COUNT,
        'select_k': _OPTIONAL_COUNT,
        'solver': {'enum': ['exact', 'pam']},
        'time_limit_s': {'type': ['number', 'null'], 'exclusiveMinimum': 0},
        'restarts': {'type': 'integer', 'minimum': 0},
        'require_proof': {'type': 'boolean'},
    }),
    'assign': _section({
        'batch_size': _COUNT,
    }),
    'analyze': _section({
        'appliance_threshold_w': {'type': 'number', 'minimum': 0},
        'ur_threshold': _SHARE,
        'min_households': _COUNT,
        'confidence': {'type': 'number', 'exclusiveMinimum': 0,
                       'exclusiveMaximum': 1},
        'daytime_hours': {'type': 'array', 'minItems': 2, 'maxItems': 2,
                          'items': {'type': 'integer', 'minimum': 0,
                                    'maximum': 24}},
        'smoothing_days': _COUNT,
        'horizon_days': _COUNT,
        'plots': {'type': 'boolean'},
    }),
}, ['artifact_dir', 'seed', 'inputs'])


def merge(base, override):
    """Recursively merge ``override`` into a copy of ``base``."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def validate(config):
    """
    Check a config against :data:`SCHEMA` and the cross-field rules.

    :raises ConfigError: listing every violation
    """
    validator = jsonschema.Draft7Validator(SCHEMA)
    problems = []
    for error in sorted(validator.iter_errors(config),
                        key=lambda e: list(e.absolute_path)):
        where = '.'.join(str(p) for p in error.absolute_path) or '<root>'
        problems.append('{}: {}'.format(where, error.message))
    if not problems:
        cluster = config.get('cluster', {})
        if cluster.get('k_min', 2) > cluster.get('k_max', 8):
            problems.append('cluster: k_min is larger than k_max')
        select = cluster.get('select_k')
        if select is not None and not (
                cluster.get('k_min', 2) <= select <= cluster.get('k_max', 8)):
            problems.append('cluster.select_k: outside [k_min, k_max]')
        start, stop = config.get('analyze', {}).get('daytime_hours', [6, 18])
        if start >= stop:
            problems.append('analyze.daytime_hours: start must precede stop')
    if problems:
        raise exceptions.ConfigError(problems)
    return config


def load_config(path=None, overrides=None):
    """
    Build the effective config.

    :param path: JSON file merged over :data:`DEFAULTS`, optional
    :param overrides: dict merged last, e.g. from command-line flags
    :raises ConfigError: when the file cannot be read or does not validate
    """
    config = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as f:
                loaded = json.load(f)
        except (IOError, OSError) as exc:
            raise exceptions.ConfigError('cannot read {}: {}'.format(
                path, exc))
        except ValueError as exc:
            raise exceptions.ConfigError('{} is not valid JSON: {}'.format(
                path, exc))
        if not isinstance(loaded, dict):
            raise exceptions.ConfigError(
                '{} must hold a JSON object'.format(path))
        config = merge(config, loaded)
    if overrides:
        config = merge(config, overrides)
    validate(config)
    _log.debug('effective config hash %s', config_hash(config))
    return config


def config_hash(config):
    """SHA-256 of the canonical JSON dump."""
    return hashlib.sha256(
        utils.canonical_json(config).encode('utf-8')).hexdigest()


def dumps(config):
    return json.dumps(config, indent=2, sort_keys=True)
