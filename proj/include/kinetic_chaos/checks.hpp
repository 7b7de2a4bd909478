#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace kc {

// scale multiplies every sample count (1 = full size); thresholds never change.
struct CheckBudget {
    double scale = 1.0;
    std::uint64_t seed = 20261016;
    int workers = 0;
};

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0;
    std::map<std::string, std::string> artifacts;  // file name -> CSV text, written by verify --out
};

struct CheckInfo {
    std::string name;
    std::string suite;
    std::string statement;  // what is checked, with its tolerance
    std::function<CheckResult(const CheckBudget&)> run;
};

const std::vector<CheckInfo>& check_registry();

// Suite names accepted by verify, "all" last.
std::vector<std::string> suite_names();

// Throws std::out_of_range for an unknown suite.
std::vector<const CheckInfo*> suite_checks(const std::string& suite);

// Runs one check, timing it; exceptions become failures carrying the message.
CheckResult run_check(const CheckInfo& info, const CheckBudget& budget);

}  // namespace kc
