"""The eight acceptance criteria, each timed against its limit."""

import random
from pathlib import Path
from urllib.parse import parse_qsl, urlsplit

from lxml import etree

import gen
import oai
from federation import Federation
from query_oracle import brute_force, op_kinds, random_expr, random_quads
from olac import ns
from olac.metadata import ElementQuad, extract_quads, parse_record, serialize_record
from olac.oryx import parse_repository, serialize_repository, upsert_record
from olac.provider import ProtocolRequest, ProviderConfig
from olac.query import CompiledQuery, parse_query, to_sql
from olac.viser import Viser, ViserRequest, local_client

GOLDEN = (Path(__file__).parent / "fixtures" / "golden_record.xml").read_bytes()
DC = "{%s}" % ns.DC


def agg_call(agg, page_size=1000):
    config = ProviderConfig(base_url="http://agg.test/", page_size=page_size)
    return lambda params: agg.handle_request(ProtocolRequest.from_pairs(params.items()), config)


def test_criterion_1_golden_record(criterion):
    with criterion(1, "golden record", 1):
        rec = parse_record(GOLDEN)
        assert [(e.tag, e.content, e.refinement_type, e.code) for e in rec.elements] == [
            ("subject", "", "olac:linguistic-field", "phonology"),
            ("contributor", "Sapir, Edward", "olac:role", "editor"),
            ("language", "Dschang", "olac:language", "x-sil-BAN"),
            ("subject", "", "olac:language", "x-sil-SKY"),
            ("type", "thesaurus", "olac:linguistic-type", "lexicon"),
            ("type", "", "software:sourcecode", "C++"),
            ("subject", "", "as-formosan:language", "Amis"),
            ("format", "", "netdc:speechformat", None),
            ("title", "TITLE", None, None),
            ("title", "ALTERNATIVE TITLE", "dcterms:alternative", None),
            ("date", "1963-09-14", "dcterms:W3CDTF", None),
            ("relation", "http://oai.grainger.uiuc.edu", "dcterms:URI", None),
        ]
        quads = extract_quads(rec)
        for expected in [
            ElementQuad("subject", "", "olac:linguistic-field", "phonology"),
            ElementQuad("contributor", "Sapir, Edward", "olac:role", "editor"),
            ElementQuad("language", "Dschang", "olac:language", "x-sil-BAN"),
            ElementQuad("date", "1963-09-14", "dcterms:W3CDTF", ""),
        ]:
            assert expected in quads


def test_criterion_2_round_trip(criterion):
    with criterion(2, "round trip", 10):
        rng = gen.seeded(2)
        for _ in range(1000):
            rec = gen.record(rng)
            text = serialize_record(rec)
            assert parse_record(text) == rec
            assert serialize_record(parse_record(text)) == text
        for i in range(5):
            repo = gen.repository(rng, 200, "rt%d" % i)
            text = serialize_repository(repo)
            assert parse_repository(text) == repo
            assert serialize_repository(parse_repository(text)) == text


def test_criterion_3_federation(criterion, tmp_path):
    with criterion(3, "federation scenario", 30):
        fed = Federation(tmp_path / "agg")
        assert [e.archive_id for e in fed.register_all()] == ["alpha", "beta", "gamma"]
        reports = {r.archive_id: r for r in fed.agg.harvest_all("full")}
        assert {k: r.added for k, r in reports.items()} == {"alpha": 40, "beta": 60, "gamma": 100}
        pages, _ = oai.collect(agg_call(fed.agg, page_size=50),
                               {"verb": "ListRecords", "metadataPrefix": "olac"})
        flat = [i for p in pages for i in p]
        assert len(flat) == 200 and set(flat) == fed.all_identifiers()

        fed.clock.advance()
        fed.edit("gamma", ["item%03d" % i for i in (5, 15, 25, 35, 45)],
                 deletions=["item055", "item065"])
        report = fed.agg.harvest("gamma", "incremental")
        assert (report.updated, report.deleted, report.added) == (5, 2, 0)
        fed.clock.advance()
        for again in fed.agg.harvest_all("incremental"):
            assert (again.added, again.updated, again.deleted) == (0, 0, 0), again.summary()


def test_criterion_4_query_oracle(criterion):
    with criterion(4, "query/oracle equivalence", 60):
        rng = random.Random(404)
        records = [random_quads(rng) for _ in range(1000)]
        seen = set()
        for _ in range(100):
            n = rng.randint(1, 3)
            expr = random_expr(rng, n)
            seen |= op_kinds(expr)
            # through the text form, so the parser is part of what is checked
            text = to_sql(expr)
            assert parse_query(text, n) == expr
            q = CompiledQuery(parse_query(text, n))
            for quads in records:
                assert q.matches_quads(quads) == brute_force(expr, quads, n), (text, quads)
        assert seen >= {"=", "!=", "LIKE", "NOT", "And", "Or"}


def test_criterion_5_paging(criterion, tmp_path):
    with criterion(5, "paging", 5):
        fed = Federation(tmp_path / "agg", sizes={"solo": 95}, swahili_every=1)
        fed.register_all()
        fed.agg.harvest_all("full")
        paged, whole = agg_call(fed.agg, page_size=10), agg_call(fed.agg, page_size=1000)
        for params in ({"verb": "ListRecords", "metadataPrefix": "olac"},
                       {"verb": "Query", "elements": "1", "sql": "e1.code='x-sil-SWA'"}):
            pages, _ = oai.collect(paged, params)
            (single,), _ = oai.collect(whole, params)
            assert len(pages) == 10 and [len(p) for p in pages] == [10] * 9 + [5]
            flat = [i for p in pages for i in p]
            assert flat == single and len(set(flat)) == 95
            first = oai.root(paged(params))
            tok, _ = oai.token(first)
            altered = {"verb": params["verb"], "resumptionToken": tok}
            if params["verb"] == "Query":
                altered["sql"] = "e1.code='x-sil-BAN'"
                altered["elements"] = "1"
            else:
                altered["metadataPrefix"] = "oai_dc"
            assert oai.error_code(oai.root(paged(altered))) == "badResumptionToken"


def test_criterion_6_crosswalk(criterion, tmp_path):
    with criterion(6, "crosswalk", 5):
        fed = Federation(tmp_path / "agg", sizes={"alpha": 40, "beta": 60})
        fed.publish(upsert_record(fed.repos["beta"], "golden", parse_record(GOLDEN),
                                  fed.clock.advance()))
        fed.register_all()
        fed.agg.harvest_all("full")
        pages, doc = oai.collect(agg_call(fed.agg, page_size=1000),
                                 {"verb": "ListRecords", "metadataPrefix": "oai_dc"})
        assert len(pages[0]) == 101
        plain = {DC + t for t in ns.DC_ELEMENTS}
        assert len(plain) == 15
        records = {}
        for record in doc.iter(oai.O + "record"):
            ident = record.findtext("%sheader/%sidentifier" % (oai.O, oai.O))
            body = record.find("%smetadata/{%s}dc" % (oai.O, ns.OAI_DC))
            children = [c for c in body if isinstance(c.tag, str)]
            assert children, ident
            for child in children:
                assert child.tag in plain, (ident, child.tag)
                assert (child.text or "").strip(), (ident, child.tag)
                assert not child.attrib, (ident, child.tag)
            records[ident] = [(etree.QName(c).localname, c.text) for c in children]
        swahili = records["oai:alpha:item000"]
        assert ("subject", "Swahili") in swahili
        assert ("title", "Alt 1") in records["oai:alpha:item001"]
        golden = records["oai:beta:golden"]
        assert ("title", "ALTERNATIVE TITLE") in golden and ("title", "TITLE") in golden
        assert not any("x-sil-" in (text or "") for rows in records.values() for _, text in rows)


def test_criterion_7_viser_swahili_page(criterion, tmp_path):
    with criterion(7, "viser Swahili page", 5):
        fed = Federation(tmp_path / "agg", sizes={"alpha": 40, "beta": 60, "gamma": 100})
        fed.register_all()
        fed.agg.harvest_all("full")
        expected = fed.swahili_identifiers()
        page_size = 10
        assert len(expected) > page_size
        config = ProviderConfig(base_url="http://agg.test/", page_size=page_size)
        viser = Viser(local_client(fed.agg, config), base_url="/viser")
        # the query string of the published example link
        params = dict(p.split("=", 1) for p in
                      "elements=1&sql=e1.code='x-sil-SWA'&title=Swahili+Language+Resources"
                      .replace("+", " ").split("&"))
        req = ViserRequest.from_params(params)
        seen, pages = [], 0
        while True:
            page = viser.render_listing(req)
            pages += 1
            assert page.status == 200
            html_doc = etree.fromstring(page.html.encode(), etree.HTMLParser())
            assert html_doc.findtext(".//title") == "Swahili Language Resources"
            seen += [a.get("href") for a in html_doc.iter("a") if "/record/" in a.get("href")]
            more = [a for a in html_doc.iter("a") if a.text == "More resources ..."]
            if not more:
                break
            req = ViserRequest.from_params(dict(parse_qsl(urlsplit(more[0].get("href")).query)))
        assert pages == -(-len(expected) // page_size)
        links = {viser.record_link(i) for i in expected}
        assert len(seen) == len(set(seen)) and set(seen) == links


def test_criterion_8_protocol_errors(criterion, tmp_path):
    with criterion(8, "protocol error table", 2):
        fed = Federation(tmp_path / "agg", sizes={"alpha": 12})
        fed.register_all()
        fed.agg.harvest_all("full")
        call = agg_call(fed.agg, page_size=5)
        table = [
            ({"verb": "Frobnicate"}, "badVerb"),
            ({"verb": "GetRecord", "metadataPrefix": "olac"}, "badArgument"),
            ({"verb": "Query", "elements": "1", "sql": "e2.code='x-sil-SWA'"}, "badArgument"),
            ({"verb": "GetRecord", "identifier": "oai:alpha:item001", "metadataPrefix": "marc"},
             "cannotDisseminateFormat"),
            ({"verb": "GetRecord", "identifier": "oai:alpha:nosuch", "metadataPrefix": "olac"},
             "idDoesNotExist"),
            ({"verb": "ListRecords", "metadataPrefix": "olac", "from": "2099-01-01"},
             "noRecordsMatch"),
            ({"verb": "ListRecords", "resumptionToken": "not-a-token"}, "badResumptionToken"),
        ]
        for params, code in table:
            doc = oai.root(call(params))
            assert oai.error_code(doc) == code, (params, etree.tostring(doc))
            assert etree.QName(oai.payload(doc)).localname == "error"
