#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "darktrack/ingest.hpp"

namespace darktrack {

/// (protocol, destination port) pair; port is 0 for ICMP and GRE.
struct ServiceKey {
    Protocol proto = Protocol::TCP;
    std::uint16_t port = 0;

    std::string to_string() const;
    friend constexpr auto operator<=>(const ServiceKey&, const ServiceKey&) = default;
};

using ServiceSequences = std::map<ServiceKey, std::vector<Ipv4>>;

/// Timestamp-ordered sender sequence per service, restricted to `active` senders.
ServiceSequences build_services(const DailyBatch& batch, const SenderSet& active);

struct Sentence {
    ServiceKey service;
    std::vector<Ipv4> words;
};

struct Corpus {
    std::vector<Sentence> sentences;
    SenderSet vocab;

    std::size_t word_count() const;
};

struct CorpusParams {
    std::size_t max_services = 2500;
    std::size_t max_sentence_len = 10000;
    bool collapse_runs = true;
};

/// Keeps the busiest services, collapses runs, chunks long sequences, drops sentences shorter than 2.
Corpus to_corpus(const ServiceSequences& services, const CorpusParams& params = {});

/// One `# service=<proto>/<port>` header per sentence followed by its space-separated senders.
void write_corpus(std::ostream& out, const Corpus& corpus);

}  // namespace darktrack
