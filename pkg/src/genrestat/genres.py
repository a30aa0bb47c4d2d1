"""Genre taxonomy; integer codes follow tuple order."""

GENRES = (
    "Children's",
    "Drama",
    "Factual",
    "Music",
    "Sport",
    "Weather",
    "Comedy",
    "Entertainment",
    "News",
)
N_GENRES = len(GENRES)


def genre_code(name: str) -> int:
    try:
        return GENRES.index(name)
    except ValueError:
        raise ValueError(f"unknown genre {name!r}; expected one of {GENRES}") from None


def genre_slug(name: str) -> str:
    return "".join(ch for ch in name.lower() if ch.isalnum())
