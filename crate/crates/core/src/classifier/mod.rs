//! Contact-formation classifier: multiclass RBF SVM over TCP wrenches.

pub mod cv;
pub mod dataset;
pub mod svm;
pub mod train;

pub use cv::{confusion_matrix, cross_validate, cv_predictions, learning_curve, stratified_folds, CvResult, GridPoint, LearningPoint};
pub use dataset::{CfDataset, Standardizer, Wrench6};
pub use svm::{smo, train_svm, BinaryMachine, SmoSettings, SvmModel};
pub use train::{adjacent_share, train_contact_classifier, TrainOptions, TrainOutput, TrainingSummary};
