"""Fixture federation: static repositories behind an in-process Vida, plus an aggregator."""

from datetime import timedelta

import gen
from olac.aggregator import Aggregator
from olac.oryx import delete_record, serialize_repository, upsert_record
from olac.provider import ProviderConfig, VidaCache
from olac.web import vida_app, wsgi_transport

VIDA = "http://vida.test"
SIZES = {"alpha": 40, "beta": 60, "gamma": 100}


class Clock:
    def __init__(self, start=gen.T0 + timedelta(days=365)):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, **kw):
        self.now += timedelta(**kw or {"minutes": 10})
        return self.now


class Federation:
    def __init__(self, data_dir, sizes=None, provider_page_size=25, swahili_every=7):
        self.clock = Clock()
        self.repos = {}
        self.documents = {}
        self.fetches = []
        for repo_id, n in (sizes or SIZES).items():
            self.publish(gen.fixture_repository(repo_id, n, swahili_every))
        config = ProviderConfig(base_url=VIDA, page_size=provider_page_size, clock=self.clock)
        cache = VidaCache(ttl=60, clock=lambda: self.clock().timestamp())
        self.vida = vida_app(config, self.fetch, cache)
        self.routes = {VIDA: self.vida}
        self.transport = wsgi_transport(self.routes)
        self.agg = Aggregator(data_dir, transport=self.transport, clock=self.clock)

    def fetch(self, url):
        self.fetches.append(url)
        if url not in self.documents:
            raise OSError("404 %s" % url)
        return self.documents[url]

    @staticmethod
    def url(repo_id):
        return "http://repos.example.org/%s.xml" % repo_id

    def base_url(self, repo_id):
        return "%s/vida/repos.example.org/%s.xml" % (VIDA, repo_id)

    def publish(self, repo):
        self.repos[repo.repository_id] = repo
        self.documents[self.url(repo.repository_id)] = serialize_repository(repo).encode("utf-8")

    def register_all(self):
        return [self.agg.register_provider(self.base_url(r)) for r in self.repos]

    def edit(self, repo_id, local_ids, deletions=()):
        now = self.clock.advance()
        repo = self.repos[repo_id]
        for local_id in local_ids:
            old = repo.get(local_id).metadata
            edited = old.__class__(
                old.elements[:1] + (old.elements[0].__class__("description", "edited"),)
                + old.elements[1:], old.namespace_decls)
            repo = upsert_record(repo, local_id, edited, now)
        for local_id in deletions:
            repo = delete_record(repo, local_id, now)
        self.publish(repo)
        self.clock.advance()  # let the Vida cache expire

    def identifiers(self, repo_id, include_deleted=True):
        return {"oai:%s:%s" % (repo_id, r.local_id) for r in self.repos[repo_id].records
                if include_deleted or not r.deleted}

    def all_identifiers(self):
        out = set()
        for repo_id in self.repos:
            out |= self.identifiers(repo_id)
        return out

    def swahili_identifiers(self):
        out = set()
        for repo_id, repo in self.repos.items():
            for r in repo.records:
                if r.deleted:
                    continue
                if any(e.code == gen.SWAHILI for e in r.metadata.elements):
                    out.add("oai:%s:%s" % (repo_id, r.local_id))
        return out
