#include "darktrack/corpus.hpp"

#include <algorithm>

namespace darktrack {

std::string ServiceKey::to_string() const {
    if (!has_ports(proto)) return std::string(darktrack::to_string(proto));
    return std::string(darktrack::to_string(proto)) + "/" + std::to_string(port);
}

ServiceSequences build_services(const DailyBatch& batch, const SenderSet& active) {
    ServiceSequences out;
    for (const auto& r : batch.records) {
        if (!contains(active, r.sender)) continue;
        const ServiceKey key{r.proto, has_ports(r.proto) ? r.dst_port : std::uint16_t{0}};
        out[key].push_back(r.sender);
    }
    return out;
}

std::size_t Corpus::word_count() const {
    std::size_t n = 0;
    for (const auto& s : sentences) n += s.words.size();
    return n;
}

Corpus to_corpus(const ServiceSequences& services, const CorpusParams& params) {
    if (params.max_services == 0) throw ConfigError("max_services must be >= 1");
    if (params.max_sentence_len < 2) throw ConfigError("max_sentence_len must be >= 2");

    std::vector<const ServiceSequences::value_type*> ranked;
    ranked.reserve(services.size());
    for (const auto& kv : services) ranked.push_back(&kv);
    // map order is already (proto, port) ascending, so a stable sort keeps that as the tie-break
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](auto* a, auto* b) { return a->second.size() > b->second.size(); });
    if (ranked.size() > params.max_services) ranked.resize(params.max_services);
    std::sort(ranked.begin(), ranked.end(), [](auto* a, auto* b) { return a->first < b->first; });

    Corpus corpus;
    for (const auto* kv : ranked) {
        std::vector<Ipv4> seq;
        seq.reserve(kv->second.size());
        for (Ipv4 ip : kv->second) {
            if (params.collapse_runs && !seq.empty() && seq.back() == ip) continue;
            seq.push_back(ip);
        }
        for (std::size_t start = 0; start < seq.size(); start += params.max_sentence_len) {
            const std::size_t end = std::min(seq.size(), start + params.max_sentence_len);
            if (end - start < 2) continue;
            Sentence s{kv->first, {seq.begin() + static_cast<std::ptrdiff_t>(start),
                                   seq.begin() + static_cast<std::ptrdiff_t>(end)}};
            corpus.vocab.insert(corpus.vocab.end(), s.words.begin(), s.words.end());
            corpus.sentences.push_back(std::move(s));
        }
    }
    normalize(corpus.vocab);
    return corpus;
}

void write_corpus(std::ostream& out, const Corpus& corpus) {
    for (const auto& s : corpus.sentences) {
        out << "# service=" << to_string(s.service.proto) << '/' << s.service.port << '\n';
        for (std::size_t i = 0; i < s.words.size(); ++i) {
            if (i) out << ' ';
            out << s.words[i].to_string();
        }
        out << '\n';
    }
}

}  // namespace darktrack
