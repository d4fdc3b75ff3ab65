from __future__ import annotations

import pytest

from amq.corpus import Dictionary, PreferredTerm


@pytest.fixture
def small_dictionary() -> Dictionary:
    return Dictionary(
        terms=[
            PreferredTerm(code=10012345, name="Hepatic failure"),
            PreferredTerm(code=10023456, name="Hepatitis acute"),
            PreferredTerm(code=10034567, name="Blood glucose decreased"),
            PreferredTerm(code=10045678, name="Hypoglycaemia"),
            PreferredTerm(code=10056789, name="Renal failure"),
        ]
    )
