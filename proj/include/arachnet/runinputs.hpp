#pragma once

// Turns the subject and window of an intent into the run-input values a plan
// reads, using the fixture dataset.

#include "arachnet/querymind.hpp"
#include "arachnet/toolsim.hpp"

#include <map>
#include <string>

namespace arachnet {

// Errors: UnknownCable for cable subjects the dataset does not know.
std::map<std::string, DataValue> materialize_run_inputs(const QueryIntent& intent, const Registry& registry,
                                                        const toolsim::FixtureDataset& dataset);

}  // namespace arachnet
