// SPDX-License-Identifier: Apache-2.0
//
// Reference LEIR programs bundled with the tests.

#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace leir::fixtures {

struct CorpusRow {
    std::string label;
    std::string leir;
};

inline std::vector<CorpusRow> load_corpus() {
    std::ifstream in(std::string(LEIR_TEST_DATA) + "/reference_programs.tsv");
    if (!in) throw std::runtime_error("missing reference_programs.tsv");
    std::vector<CorpusRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        auto tab = line.find('\t');
        if (tab == std::string::npos) continue;
        rows.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return rows;
}

inline std::string corpus_get(const std::string& label) {
    for (auto& r : load_corpus()) {
        if (r.label == label) return r.leir;
    }
    throw std::runtime_error("no corpus row " + label);
}

}  // namespace leir::fixtures
