"""
Ranking fifty clients
=====================

A standard cohort of fifty clients, five of which poisoned their whole
local dataset with a fixed trigger. The authentication server ranks every
client by suspicion and flags those above the largest gap in the scores.
"""

from embedauth import AuthenticationServer, ClientSubmission, FlagPolicy, build_reference_model
from embedauth.sim import AttackConfig, WorldConfig, apply_attack, gen_world, make_trigger

world = gen_world(WorldConfig(seed=0))
attack = AttackConfig(make_trigger(world.config.dim, norm=8.0, seed=0), poison_fraction=1.0, seed=0)
data = apply_attack(world.clients, attack, world.poisoned_ids)

model = build_reference_model(world.reference.X, world.reference.y)
server = AuthenticationServer(model, world.reference_by_class(), policy=FlagPolicy("largest_gap"), seed=0)
result = server.authenticate([ClientSubmission(c, d.X, d.y) for c, d in sorted(data.items())], round=0)

scores = {r.client_id: r.S for r in result.reports}
print("rank  client  S        status")
for v in result.verdicts[:8]:
    mark = "*" if v.client_id in world.poisoned_ids else " "
    print(f"{v.rank:>4}  {v.client_id}{mark}    {scores[v.client_id]:.4f}   {v.status}")
print("...")
print("poisoned:", world.poisoned_ids)
print("tags issued this round:", len(result.tags))
