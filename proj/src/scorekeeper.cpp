#include "vulnloop/scorekeeper.hpp"

#include <algorithm>
#include <set>

namespace vulnloop {

std::string_view to_string(ScoreEventKind kind) {
    switch (kind) {
        case ScoreEventKind::FixCredit: return "FixCredit";
        case ScoreEventKind::AllFixedBonus: return "AllFixedBonus";
        case ScoreEventKind::Penalty: return "Penalty";
    }
    return "FixCredit";
}

std::vector<ScoreEvent> ScoreLedger::settle_round(int iteration,
                                                  const std::vector<Cwe>& claimed_fixed,
                                                  const std::vector<Cwe>& next_check_found) {
    // Claims and findings are compared as sets; a model listing the same CWE
    // twice earns (or loses) one point.
    std::vector<Cwe> claims;
    for (const auto& c : claimed_fixed) {
        if (std::find(claims.begin(), claims.end(), c) == claims.end()) claims.push_back(c);
    }
    const std::set<Cwe> found(next_check_found.begin(), next_check_found.end());
    const std::set<Cwe> claimed_set(claims.begin(), claims.end());

    std::vector<ScoreEvent> added;
    for (const auto& c : claims) {
        if (found.contains(c)) {
            added.push_back({iteration, ScoreEventKind::Penalty, c, -1});
        } else {
            added.push_back({iteration, ScoreEventKind::FixCredit, c, +1});
        }
    }
    for (const auto& c : found) {
        if (!claimed_set.contains(c)) {
            added.push_back({iteration, ScoreEventKind::Penalty, c, -1});
        }
    }
    if (found.empty()) {
        added.push_back({iteration, ScoreEventKind::AllFixedBonus, std::nullopt, +1});
    }
    for (const auto& e : added) {
        current_ += e.delta;
        events_.push_back(e);
    }
    return added;
}

int ScoreLedger::replayed_total() const {
    int total = 0;
    for (const auto& e : events_) total += e.delta;
    return total;
}

std::string ScoreLedger::render() const { return std::to_string(current_); }

ScoreLedger ScoreLedger::from_events(std::vector<ScoreEvent> events) {
    ScoreLedger ledger;
    ledger.events_ = std::move(events);
    ledger.current_ = ledger.replayed_total();
    return ledger;
}

}  // namespace vulnloop
