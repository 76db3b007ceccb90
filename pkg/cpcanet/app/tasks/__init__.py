# Process-pool sweep jobs
