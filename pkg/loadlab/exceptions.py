class LoadlabException(Exception):
    exit_code = 1


class ConfigError(LoadlabException):
    exit_code = 2

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super(ConfigError, self).__init__('; '.join(self.problems))


class DataError(LoadlabException):
    exit_code = 3


class MalformedRowError(DataError):
    def __init__(self, line, reason, path=None):
        self.line = line
        self.reason = reason
        self.path = path
        super(MalformedRowError, self).__init__()

    def __str__(self):
        where = 'line {}'.format(self.line)
        if self.path is not None:
            where = '{}:{}'.format(self.path, self.line)
        return '{}: {}'.format(where, self.reason)


class UnknownHouseholdError(DataError):
    def __init__(self, household_ids):
        self.household_ids = sorted(household_ids)
        super(UnknownHouseholdError, self).__init__()

    def __str__(self):
        return 'unknown household ids: {}'.format(
            ', '.join(self.household_ids))


class OutOfOrderError(DataError):
    pass


class IncompleteProfileError(DataError):
    pass


class StaleIntermediateError(DataError):
    def __init__(self, stage, paths):
        self.stage = stage
        self.paths = list(paths)
        super(StaleIntermediateError, self).__init__()

    def __str__(self):
        return ('stage "{}" has outputs built from different inputs ({}); '
                'use --force to rebuild'.format(self.stage,
                                                ', '.join(self.paths)))


class SolverError(LoadlabException):
    exit_code = 3


class SolverTimeout(SolverError):
    exit_code = 4

    def __init__(self, model):
        self.model = model
        super(SolverTimeout, self).__init__()

    def __str__(self):
        gap = 'unknown' if self.model.gap is None else '{:.4%}'.format(
            self.model.gap)
        return ('time limit reached for k={} without optimality proof '
                '(gap {})'.format(self.model.k, gap))
