#pragma once

#include <stdexcept>
#include <string>

namespace sgg {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SGG_DEFINE_ERROR(Name)          \
  class Name : public Error {           \
   public:                              \
    using Error::Error;                 \
  }

// graph core
SGG_DEFINE_ERROR(CyclicHierarchy);
SGG_DEFINE_ERROR(UnknownNode);
SGG_DEFINE_ERROR(InvalidGraph);
SGG_DEFINE_ERROR(ParseError);

// geometry
SGG_DEFINE_ERROR(UnknownInstance);
SGG_DEFINE_ERROR(DegeneratePair);
SGG_DEFINE_ERROR(EmptyPointSet);
SGG_DEFINE_ERROR(InvalidScene);
SGG_DEFINE_ERROR(InvalidCamera);

// synthetic data
SGG_DEFINE_ERROR(InfeasibleSpec);

// network
SGG_DEFINE_ERROR(DomainError);
SGG_DEFINE_ERROR(ShapeMismatch);
SGG_DEFINE_ERROR(TooFewInstances);
SGG_DEFINE_ERROR(EmptyDataset);
SGG_DEFINE_ERROR(VocabularyError);

// retrieval and evaluation
SGG_DEFINE_ERROR(EmptyIndex);
SGG_DEFINE_ERROR(MissingGroundTruth);
SGG_DEFINE_ERROR(ConfigError);
SGG_DEFINE_ERROR(DataError);

#undef SGG_DEFINE_ERROR

}  // namespace sgg
