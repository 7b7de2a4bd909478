#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <vector>

#include "kinetic_chaos/types.hpp"

namespace kc {

enum class DegeneratePolicy { reject, perturb };

struct FlowPolicy {
    double grazing_tolerance = 1e-12;      // min |omega . dv| treated as a collision
    double simultaneity_tolerance = 1e-12; // events sharing a particle closer than this are flagged
    DegeneratePolicy degenerate = DegeneratePolicy::reject;
    std::uint64_t perturb_seed = 0x5eed;
    double overlap_tolerance = 1e-9;  // relative, on squared distances
    long max_events = 1000000;
    int max_perturbations = 64;
    int full_recompute_limit = 64;  // above this many colliding particles, per-particle event caching
};

struct FlowEvent {
    double time = 0;
    int i = 0, j = 0;  // i < j
    std::vector<double> omega;  // (x_j - x_i)/|x_j - x_i| at contact
    std::vector<double> pre_i, pre_j, post_i, post_j;
};

struct FlowEventLog {
    std::vector<FlowEvent> events;
    int perturbations = 0;
};

// Raised under the reject policy for grazing or simultaneous events, and when
// a run exceeds its event or perturbation budget.
struct DegenerateEventError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Contact {
    int i = 0, j = 0;
    double time = 0;
    std::vector<double> omega;
};

struct FlowResult {
    PhasePoint state;
    FlowEventLog log;
};

// Earliest approaching contact under free streaming, if any.
std::optional<Contact> next_collision(const PhasePoint& z, double eps, const FlowPolicy& policy = {});

// Hard-sphere flow over time t >= 0. At an exact collision time the
// post-collisional state is returned.
FlowResult advance(const PhasePoint& z, double t, const SimConfig& cfg, const FlowPolicy& policy = {});

// Backward flow: reverse velocities, advance, reverse again. Event times are
// backward times; pre/post velocities are in the forward frame, "post" being
// the velocity held at larger backward times.
FlowResult backward(const PhasePoint& z, double t, const SimConfig& cfg, const FlowPolicy& policy = {});

// Flow in which only pairs with both (1-based) indices <= m-1 collide; every
// other pair streams through contact.
FlowResult advance_tilde(const PhasePoint& z, double t, int m, const SimConfig& cfg, const FlowPolicy& policy = {});
FlowResult backward_tilde(const PhasePoint& z, double t, int m, const SimConfig& cfg, const FlowPolicy& policy = {});

// Core engine: collisions only among indices < tracked. t may be +inf, in
// which case the loop stops once no further event exists and the returned
// state is the one right after the last event.
FlowResult evolve(const PhasePoint& z, double t, double eps, int tracked, const FlowPolicy& policy, bool reverse);

// Complete collision record of the (backward or forward) flow.
FlowEventLog collision_history(const PhasePoint& z, double eps, int tracked, const FlowPolicy& policy, bool backward);

// One row per event: time,i,j,omega_0..,pre_i_0..,pre_j_0..,post_i_0..,post_j_0..
void write_event_log_csv(std::ostream& os, const FlowEventLog& log, int d);

}  // namespace kc
