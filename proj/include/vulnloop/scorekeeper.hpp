#pragma once

#include "vulnloop/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace vulnloop {

enum class ScoreEventKind { FixCredit, AllFixedBonus, Penalty };

std::string_view to_string(ScoreEventKind kind);

struct ScoreEvent {
    int iteration = 0;
    ScoreEventKind kind = ScoreEventKind::FixCredit;
    std::optional<Cwe> cwe;
    int delta = 0;
};

/// Authoritative reward ledger for encouragement prompting. Model-reported
/// scores are never written here.
///
/// Point rules: +1 per claimed fix that the follow-up check no longer finds,
/// -1 per claimed fix still found, -1 per CWE found by the follow-up check
/// that was not claimed (introduced or missed), +1 bonus when the follow-up
/// check is clean. The bonus is per fix round.
class ScoreLedger {
public:
    int current() const noexcept { return current_; }
    const std::vector<ScoreEvent>& events() const noexcept { return events_; }

    /// Settles one fix round retrospectively. Returns the events appended.
    std::vector<ScoreEvent> settle_round(int iteration, const std::vector<Cwe>& claimed_fixed,
                                         const std::vector<Cwe>& next_check_found);

    /// Sum of event deltas; equals current() for any ledger built through settle_round.
    int replayed_total() const;

    /// Decimal text of current(), for prompt interpolation.
    std::string render() const;

    /// Rebuilds a ledger from a recorded event list.
    static ScoreLedger from_events(std::vector<ScoreEvent> events);

private:
    int current_ = 0;
    std::vector<ScoreEvent> events_;
};

}  // namespace vulnloop
