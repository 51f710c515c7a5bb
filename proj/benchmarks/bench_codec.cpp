#include <benchmark/benchmark.h>

#include <hitl/tag_codec.hpp>
#include <hitl/text_util.hpp>

#include <random>
#include <sstream>

namespace {

hitl::TaggedReport sample_report(int quotes) {
  hitl::TaggedReport r;
  r.explanation = "The letter instructs the governor to consult before acting on taxes.";
  r.score = 7;
  for (int i = 0; i < quotes; ++i)
    r.quotations.push_back("quotation number " + std::to_string(i) + " from the source text");
  return r;
}

void BM_ReportRoundTrip(benchmark::State &state) {
  hitl::OutputContract contract;
  contract.kind = hitl::ContractKind::element_report;
  contract.score_range = hitl::IntRange{0, 10};
  auto report = sample_report(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto text = hitl::format_report(report);
    benchmark::DoNotOptimize(hitl::parse_element_report(text, contract));
  }
}
BENCHMARK(BM_ReportRoundTrip)->Arg(1)->Arg(5)->Arg(10);

void BM_ExtractBlocks(benchmark::State &state) {
  std::string text;
  for (int i = 0; i < state.range(0); ++i)
    text += "<evidence>item " + std::to_string(i) + " with some supporting words</evidence>\n";
  for (auto _ : state)
    benchmark::DoNotOptimize(hitl::extract_blocks(text, "evidence"));
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * text.size()));
}
BENCHMARK(BM_ExtractBlocks)->Arg(10)->Arg(100)->Arg(1000);

void BM_VerifyQuote(benchmark::State &state) {
  auto letter = hitl::text::read_file(std::string(HITL_BENCH_DATA_DIR) + "/fixtures/letter.txt");
  std::vector<std::string> words;
  std::istringstream in(letter);
  for (std::string w; in >> w;)
    words.push_back(w);
  auto span = [&](std::size_t from, std::size_t n) {
    std::string out;
    for (std::size_t i = from; i < from + n && i < words.size(); ++i)
      out += (out.empty() ? "" : " ") + words[i];
    return out;
  };
  // a quote near the end is the slow case
  auto quote = span(words.size() / 2, 8) + " ... " + span(words.size() - 10, 8);
  for (auto _ : state)
    benchmark::DoNotOptimize(hitl::verify_quote(quote, letter));
  state.SetBytesProcessed(static_cast<int64_t>(state.iterations() * letter.size()));
}
BENCHMARK(BM_VerifyQuote);

} // namespace
