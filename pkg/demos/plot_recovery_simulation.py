"""
Federated training with and without authentication
==================================================

Twenty FedAvg rounds on one seeded world, run three ways: every client
clean, five clients poisoned and admitted, and five poisoned but screened
out by the authentication server before they may submit updates.
"""

from embedauth import AggregationRule, AuthenticationServer, FlagPolicy, build_reference_model
from embedauth.sim import AttackConfig, WorldConfig, apply_attack, gen_world, make_trigger, run_simulation

world = gen_world(WorldConfig(seed=0))

# a trigger aimed along the class-separation axis does the most damage
trigger = make_trigger(16, 8.0, seed=0, axis=world.generator.separation_axis(), alignment=1.0)
data = apply_attack(world.clients, AttackConfig(trigger, 1.0, seed=0), world.poisoned_ids)

model = build_reference_model(world.reference.X, world.reference.y)
server = AuthenticationServer(model, world.reference_by_class(), policy=FlagPolicy("topk", k=5), seed=0)

settings = dict(rule=AggregationRule("fedavg"), rounds=20, epochs=50, learning_rate=1.0)
clean = run_simulation(world, world.clients, **settings)
admitted = run_simulation(world, data, **settings)
screened = run_simulation(world, data, auth=server, **settings)

for name, res in [("clean", clean), ("poisoned, no auth", admitted), ("poisoned, auth", screened)]:
    print(f"{name:<18} final accuracy {100 * res.final_accuracy:.2f}%")
print("participants per round with auth:", len(screened.records[0].participants))
