# Run records, reports and scenario files
