"""Exception and warning types raised by vidmeter."""


class VidmeterError(Exception):
    """Base class for all structured evaluation errors."""


class MetricWarning(UserWarning):
    """A metric fell back to a defined default (e.g. 0 for a topic with no relevant shots)."""


# --- parsing -----------------------------------------------------------------

class ParseError(VidmeterError):
    def __init__(self, message, line_no=None, source=None):
        self.line_no = line_no
        self.source = source
        where = []
        if source is not None:
            where.append(str(source))
        if line_no is not None:
            where.append(f"line {line_no}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class MalformedLine(ParseError):
    pass


class DuplicateShot(ParseError):
    def __init__(self, topic, shot, line_no=None):
        self.topic, self.shot = topic, shot
        super().__init__(f"shot {shot!r} listed twice for topic {topic!r}", line_no)


class RankOverflow(ParseError):
    def __init__(self, topic, count, limit):
        self.topic = topic
        super().__init__(f"topic {topic!r} has {count} entries (limit {limit})")


class NonContiguousRanks(ParseError):
    def __init__(self, topic, detail=""):
        self.topic = topic
        super().__init__(f"ranks for topic {topic!r} are not 1..n{': ' + detail if detail else ''}")


class ScoreOrderError(ParseError):
    def __init__(self, topic, rank):
        self.topic = topic
        super().__init__(f"topic {topic!r}: score increases at rank {rank}")


class UnknownStratum(ParseError):
    pass


class ShotJudgedTwice(ParseError):
    def __init__(self, topic, shot, line_no=None):
        self.topic, self.shot = topic, shot
        super().__init__(f"shot {shot!r} judged twice for topic {topic!r}", line_no)


class EmptyTopic(ParseError):
    pass


class FrameSpanOutOfBounds(ParseError):
    pass


class MissingConfidence(ParseError):
    pass


class UnexpectedConfidence(ParseError):
    pass


class DuplicateCaption(ParseError):
    pass


class RatingOutOfRange(ParseError):
    pass


# --- evaluation --------------------------------------------------------------

class EmptyRunList(VidmeterError):
    pass


class ZeroSamplingRate(VidmeterError):
    pass


class EmptyComparisonSet(VidmeterError):
    pass


class MixedActivityLabels(VidmeterError):
    pass


class NoTrueInstances(VidmeterError):
    pass


class ZeroDuration(VidmeterError):
    pass


class NoNonReferenceDuration(VidmeterError):
    pass


class IncompleteMatrix(VidmeterError):
    pass


class TopicMismatch(VidmeterError):
    pass


class ZeroVariance(VidmeterError):
    def __init__(self, metric):
        self.metric = metric
        super().__init__(f"metric {metric!r} has zero variance")


class EmptyLog(VidmeterError):
    pass


class MissingVideo(VidmeterError):
    pass


class ConfigError(VidmeterError):
    pass
