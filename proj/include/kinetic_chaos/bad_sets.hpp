#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "kinetic_chaos/rng.hpp"
#include "kinetic_chaos/types.hpp"

namespace kc {

// u = |v|^{-1} (2 omega (omega . v) - v), a unit vector.
std::vector<double> sphere_map(const std::vector<double>& v, const std::vector<double>& omega);

struct Line {
    std::vector<double> point;
    std::vector<double> direction;  // nonzero; normalized internally
};

struct MeasureEstimate {
    double estimate = 0;
    double std_err = 0;
};

// Surface measure of {omega in S^{d-1} : dist(omega, line) <= rho}. The polar
// angle about the line direction is sampled over the range where the set is
// nonempty; the azimuthal cap is integrated exactly.
MeasureEstimate cylinder_cap_measure(const Line& line, double rho, int d, long M, Rng& rng);

enum class BadSetFlavor { prop9, appA };
std::string flavor_name(BadSetFlavor f);

// One sub-set of the bad set: index 1..7 (I..VII) and the pre(-)/post(+) side.
struct BadLabel {
    int set = 1;
    bool post = false;
    std::string name() const;  // e.g. "B_III(-)"
    bool operator==(const BadLabel&) const = default;
};

struct BadSetVerdict {
    bool member = false;
    std::vector<BadLabel> which;
    BadSetFlavor flavor = BadSetFlavor::prop9;
    bool has(int set) const;
    bool has(int set, bool post) const;
};

// State Z' of s+k particles at the last creation time and the parent of the
// next creation (0-based).
struct BadSetContext {
    PhasePoint state;
    int parent = 0;
};

// Candidate next creation: backward time offset tau, velocity, impact direction.
struct Candidate {
    double tau = 0;
    std::vector<double> v;
    std::vector<double> omega;
};

// Throws InputError unless sin(theta) > c_d eps / y, eta < R and the remaining
// cutoff parameters are valid.
void check_bad_set_hypothesis(const CutoffParams& cut, const SimConfig& cfg);

// Precomputed backward history of a context; reused across candidates.
class BadSetClassifier {
public:
    BadSetClassifier(const BadSetContext& ctx, const CutoffParams& cut, const SimConfig& cfg, BadSetFlavor flavor);
    BadSetVerdict classify(const Candidate& c) const;
    // State right after adding the candidate at backward time tau.
    PhasePoint extend(const Candidate& c) const;

private:
    struct Segment {
        double start = 0;          // backward time at which the segment begins
        std::vector<double> x, v;  // position at `start`, velocity
    };
    struct Branch {
        std::vector<double> x, v;  // position on the tau slice, velocity
    };
    std::vector<Branch> branches(int i, double tau) const;  // first entry is the active one

    BadSetContext ctx_;
    CutoffParams cut_;
    SimConfig cfg_;
    BadSetFlavor flavor_;
    std::vector<std::vector<Segment>> segments_;
};

BadSetVerdict classify_candidate(const BadSetContext& ctx, const Candidate& c, const CutoffParams& cut,
                                 const SimConfig& cfg, BadSetFlavor flavor);

struct BadMeasure {
    double estimate = 0;
    double std_err = 0;
    double bracket = 0;  // alpha + y/(eta T) + (eta/R)^{d-1} + theta^{(d-1)/2}
    double scale = 0;    // (s+k) T R^d
    double volume = 0;   // T |B_2R| |S^{d-1}|
    std::array<MeasureEstimate, 7> per_set{};     // B_I .. B_VII, both sides
    std::array<MeasureEstimate, 14> per_label{};  // index 2 (set-1) + post
    long samples = 0;

    const MeasureEstimate& label(int set, bool post) const { return per_label[std::size_t(2 * (set - 1) + post)]; }
};

// Monte Carlo measure of the bad set over [0,T] x B_2R x S^{d-1}.
BadMeasure estimate_bad_measure(const BadSetContext& ctx, const CutoffParams& cut, const SimConfig& cfg, double T,
                                long M, std::uint64_t seed, BadSetFlavor flavor, int workers = 1);

struct StabilityReport {
    double fraction_good = 1.0;
    long tested = 0;
    long failures = 0;
    long rejected_as_bad = 0;
};

// Draws candidates on [0,T] x B_2R x S^{d-1} until M fall outside the bad set,
// extends the state by each and checks K and U^eta (prop9) or G and hat-U^eta
// (appA) on the result.
StabilityReport verify_stability(const BadSetContext& ctx, const CutoffParams& cut, const SimConfig& cfg, long M,
                                 std::uint64_t seed, BadSetFlavor flavor, double T = 1.0);

// CSV: flavor,subset,alpha,y,eta,theta,R,T,estimate,stderr,bracket,skipped
void write_badset_csv_header(std::ostream& os);
void write_badset_csv_rows(std::ostream& os, BadSetFlavor flavor, const CutoffParams& cut, double T,
                           const BadMeasure& m, bool skipped);

}  // namespace kc
