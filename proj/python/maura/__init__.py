from ._maura import *  # noqa: F401,F403
