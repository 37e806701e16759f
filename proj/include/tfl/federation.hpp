#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "tfl/agent.hpp"
#include "tfl/fl.hpp"

namespace tfl::fl {

struct RoundResult {
    int round = 0;
    ConfusionMatrix matrix;
    ModelParams model;  // model evaluated this round
};

struct FederationReport {
    std::vector<RoundResult> rounds;
    bool complete = false;
    std::string failure;  // set when the run aborted with partial results
};

// Sequential federation: round 0 evaluates the untrained model, then each
// hospital in turn trains and returns it. Every hospital connection must
// already be trusted; throws agent::UntrustedConnection before any model
// bytes leave otherwise.
FederationReport run_federation(agent::Agent& researcher,
                                const std::vector<std::string>& hospital_connection_ids,
                                const ModelParams& initial_model,
                                const Dataset& validation,
                                std::chrono::milliseconds round_timeout =
                                    std::chrono::seconds(30));

}  // namespace tfl::fl
