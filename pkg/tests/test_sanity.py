import ddmimo


def test_import() -> None:
    assert ddmimo.__all__
    for name in ddmimo.__all__:
        assert getattr(ddmimo, name)
