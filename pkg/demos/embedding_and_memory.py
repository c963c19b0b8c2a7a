"""Feature-hashed embeddings and the active memory store.

Every piece of text becomes a fixed 256-dimensional unit vector through a
hashing embedder, so similarity works without any external model. The
memory store ranks records by cosine similarity weighted by importance.
"""

from cogfabric import EntityStore, HashingEmbedder, MemoryStore, cosine_similarity

emb = HashingEmbedder()

a = emb.embed("the payment gateway returned an error")
b = emb.embed("payment gateway error logs")
c = emb.embed("schedule the quarterly review meeting")
print(f"related texts   cos = {cosine_similarity(a, b):.3f}")
print(f"unrelated texts cos = {cosine_similarity(a, c):.3f}")

store = MemoryStore(emb)
store.add("Error check: Payment-Gateway returned 503 at 09:15.")
store.add("Deploy pipeline finished green yesterday.", importance=0.0)
store.add("Incident postmortem: Payment-Gateway timeout root cause.", importance=1.0)

query = emb.embed("what happened with the payment gateway error")
print("\ntop matches for the gateway query:")
for record, score in store.retrieve(query, k=3):
    print(f"  {score:.3f}  {record.text}")

entities = EntityStore()
entities.update("Payment-Gateway", {"status": "degraded"}, by="monitor", at=1.0)
entities.update(
    "Payment-Gateway", {"status": "healthy", "owner": "payments"}, by="oncall", at=2.0
)
state = entities.lookup("Payment-Gateway")
print(f"\nentity state after two updates: {state.attributes}")
