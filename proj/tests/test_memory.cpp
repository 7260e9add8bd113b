#include <gtest/gtest.h>

#include <random>

#include "sotta/errors.hpp"
#include "sotta/memory_bank.hpp"
#include "sotta/network.hpp"

using namespace sotta;

namespace {

Tensor feat(double v) { return Tensor::matrix({{v, -v}}); }

// Full bank of capacity 4 with the given labels, features equal to the insertion index.
MemoryBank filled_bank(const std::vector<int>& labels, std::uint64_t seed = 1) {
  MemoryBank bank(labels.size(), 3, seed);
  for (std::size_t i = 0; i < labels.size(); ++i)
    EXPECT_EQ(bank.maybe_insert(feat(i), labels[i], 0.999, 0.99).kind, InsertKind::kAppended);
  return bank;
}

std::vector<std::size_t> recount(const MemoryBank& bank, std::size_t classes) {
  std::vector<std::size_t> counts(classes, 0);
  for (const MemoryItem& it : bank.items()) ++counts[it.predicted_label];
  return counts;
}

}  // namespace

TEST(Confidence, Examples) {
  EXPECT_DOUBLE_EQ(confidence_of(std::vector<double>{0, 0}), 0.5);
  EXPECT_NEAR(confidence_of(std::vector<double>{2, 0, 0}), 0.78699, 1e-5);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> z{n(rng), n(rng), n(rng), n(rng), n(rng)};
    EXPECT_GE(confidence_of(z), 0.2 - 1e-15);
    EXPECT_EQ(confidence_of(z), prediction_from_logits(z).confidence);
  }
}

TEST(MemoryBank, LowConfidenceRejectedAndBankUnchanged) {
  MemoryBank bank(4, 3, 1);
  bank.maybe_insert(feat(1), 0, 0.995, 0.99);
  const auto before = bank.as_batch();
  EXPECT_EQ(bank.maybe_insert(feat(2), 1, 0.5, 0.99).kind, InsertKind::kRejected);
  // Strict inequality: equal to the threshold is rejected.
  EXPECT_EQ(bank.maybe_insert(feat(3), 1, 0.99, 0.99).kind, InsertKind::kRejected);
  EXPECT_EQ(bank.as_batch(), before);
  EXPECT_EQ(bank.class_counts(), (std::vector<std::size_t>{1, 0, 0}));
}

TEST(MemoryBank, MinorityInsertEvictsFromPrevalentClass) {
  MemoryBank bank = filled_bank({0, 0, 0, 1});
  const InsertOutcome out = bank.maybe_insert(feat(9), 1, 0.999, 0.99);
  EXPECT_EQ(out.kind, InsertKind::kReplaced);
  EXPECT_EQ(out.evicted_class, 0);
  EXPECT_EQ(bank.class_counts(), (std::vector<std::size_t>{2, 2, 0}));
  EXPECT_EQ(bank.size(), 4u);
}

TEST(MemoryBank, PrevalentInsertEvictsOwnClass) {
  MemoryBank bank = filled_bank({0, 1, 0, 1});
  const InsertOutcome out = bank.maybe_insert(feat(9), 0, 0.999, 0.99);
  EXPECT_EQ(out.kind, InsertKind::kReplaced);
  EXPECT_EQ(out.evicted_class, 0);
  EXPECT_EQ(bank.class_counts(), (std::vector<std::size_t>{2, 2, 0}));
}

TEST(MemoryBank, PrevalentClassesIncludeTies) {
  EXPECT_EQ(filled_bank({0, 0, 0, 1}).prevalent_classes(), (std::set<int>{0}));
  EXPECT_EQ(filled_bank({0, 1, 0, 1, 2}).prevalent_classes(), (std::set<int>{0, 1}));
  EXPECT_EQ(filled_bank({2}).prevalent_classes(), (std::set<int>{2}));
  EXPECT_THROW(MemoryBank(4, 3, 1).prevalent_classes(), ContractError);
}

TEST(MemoryBank, AsBatchIsOrderedAndNonDestructive) {
  MemoryBank bank(5, 3, 1);
  EXPECT_FALSE(bank.as_batch().has_value());
  for (int i = 0; i < 3; ++i) bank.maybe_insert(feat(i), i, 0.999, 0.99);
  const auto a = bank.as_batch(), b = bank.as_batch();
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(a->shape(), (Shape{3, 2}));
  EXPECT_EQ(*a, *b);
  EXPECT_EQ((*a)(2, 0), 2.0);
  EXPECT_EQ(bank.size(), 3u);
}

TEST(MemoryBank, FifoPolicyIsARingBuffer) {
  MemoryBank bank(3, 3, 1, MemoryPolicy::kFifo);
  for (int i = 0; i < 5; ++i) bank.maybe_insert(feat(i), 0, 0.999, 0.99);
  const Tensor b = *bank.as_batch();
  EXPECT_EQ(b(0, 0), 2.0);
  EXPECT_EQ(b(2, 0), 4.0);
}

TEST(MemoryBank, RandomSequencesKeepInvariants) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> label(0, 4);
    std::uniform_real_distribution<double> conf(0.2, 1.0);
    const double c0 = 0.6;
    MemoryBank bank(16, 5, seed), twin(16, 5, seed);
    for (int step = 0; step < 400; ++step) {
      const int y = label(rng);
      const double c = conf(rng);
      const bool was_full = bank.full();
      const auto counts_before = bank.class_counts();
      const std::set<int> prevalent = bank.empty() ? std::set<int>{} : bank.prevalent_classes();
      const std::size_t max_before = bank.empty() ? 0 : counts_before[*prevalent.begin()];
      const InsertOutcome out = bank.maybe_insert(feat(step), y, c, c0);
      twin.maybe_insert(feat(step), y, c, c0);

      EXPECT_LE(bank.size(), 16u);
      if (was_full) EXPECT_EQ(bank.size(), 16u);
      EXPECT_EQ(bank.class_counts(), recount(bank, 5));
      for (const MemoryItem& it : bank.items()) EXPECT_GT(it.confidence, c0);
      if (was_full && out.kind == InsertKind::kReplaced) {
        const auto& counts = bank.class_counts();
        if (prevalent.contains(y)) {
          EXPECT_EQ(counts, counts_before);
        } else {
          EXPECT_LE(*std::max_element(counts.begin(), counts.end()), max_before);
        }
      }
    }
    EXPECT_EQ(bank.as_batch(), twin.as_batch());
  }
}

TEST(MemoryBank, ZeroThresholdAcceptsEverything) {
  MemoryBank bank(8, 4, 2);
  for (int i = 0; i < 8; ++i) EXPECT_NE(bank.maybe_insert(feat(i), i % 4, 0.26, 0.0).kind, InsertKind::kRejected);
}
