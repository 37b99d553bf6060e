import pytest

from monoflow.errors import InputError
from monoflow.examples import describe, lookup, registry, verify_claim

CLAIMS = [(e.name, i) for e in registry() for i in range(len(e.expected))]


@pytest.mark.parametrize("name,index", CLAIMS, ids=[f"{n}-{i}" for n, i in CLAIMS])
def test_expected_claim_holds(name, index):
    entry = lookup(name)
    res = verify_claim(entry, entry.expected[index])
    assert res.passed, (res.verdict, res.detail)


def test_registry_names_unique_and_described():
    names = [e.name for e in registry()]
    assert len(names) == len(set(names))
    for e in registry():
        d = describe(e)
        assert d["d"] == e.field.dim and d["m"] == e.field.noise_dim
        assert d["expected"]


def test_every_reference_domain_matches_its_field():
    for e in registry():
        assert e.reference_domain.dim == e.field.dim


def test_lookup_unknown():
    with pytest.raises(InputError):
        lookup("lorenz")
