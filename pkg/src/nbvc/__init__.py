"""Neural B-frame video codec: fine-grained bi-directional motion compression
and selective temporal fusion, end to end from frames to decodable bitstream."""

__version__ = "0.1.0"
